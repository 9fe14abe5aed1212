#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <json.hpp>

#include "../calibration.hpp"
#include "../errors.hpp"
#include "../plan.hpp"
#include "config.hpp"

namespace rmlmc::bench {

using ojson = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRmseCiMethod = "chi-square interval on the mean squared error, M-1 degrees of freedom, 95%";
inline constexpr const char* kEfficiencyCiMethod = "F interval on the MSE ratio, (M-1, M-1) degrees of freedom, 90%";

struct BenchmarkRecord {
    std::string estimator;
    std::string grid;  // "epsilon" or "budget"
    double grid_value = 0.0;
    double epsilon = 0.0;
    double tau = 0.0;
    double J = 0.0;
    double K = 0.0;
    int R = 1;
    std::vector<double> q;
    std::vector<std::uint64_t> J_levels;
    double planned_cost = 0.0;
    double realized_cost = 0.0;
    std::uint64_t replications = 0;
    std::uint64_t seed = 0;
    double cdf_threshold = 0.0;
    double cdf_reference = 0.0;
    double cdf_mean = 0.0;
    double cdf_rmse = 0.0;
    double cdf_rmse_lo = 0.0;
    double cdf_rmse_hi = 0.0;
    double quantile_p = 0.0;
    double quantile_reference = 0.0;
    double quantile_mean = 0.0;
    double quantile_rmse = 0.0;
    double quantile_rmse_lo = 0.0;
    double quantile_rmse_hi = 0.0;
    std::uint64_t quantile_flagged = 0;

    bool operator==(const BenchmarkRecord&) const = default;
};

struct TauSweepRecord {
    std::string estimator;
    double tau = 0.0;
    double budget = 0.0;
    double epsilon_t1 = 0.0;
    double J_t1 = 0.0;
    double K_t1 = 0.0;
    int R_t1 = 0;
    double cost_t1 = 0.0;
    double epsilon_t2 = 0.0;
    double J_t2 = 0.0;
    double K_t2 = 0.0;
    int R_t2 = 0;
    double cost_t2 = 0.0;
    std::uint64_t replications = 0;
    double mse_t1 = 0.0;
    double mse_t2 = 0.0;
    double efficiency = 0.0;
    double efficiency_lo = 0.0;
    double efficiency_hi = 0.0;

    bool operator==(const TauSweepRecord&) const = default;
};

inline ojson to_json(const BenchmarkRecord& r) {
    return ojson{{"estimator", r.estimator},
                 {"grid", r.grid},
                 {"grid_value", r.grid_value},
                 {"epsilon", r.epsilon},
                 {"tau", r.tau},
                 {"J", r.J},
                 {"K", r.K},
                 {"R", r.R},
                 {"q", r.q},
                 {"J_levels", r.J_levels},
                 {"planned_cost", r.planned_cost},
                 {"realized_cost", r.realized_cost},
                 {"replications", r.replications},
                 {"seed", r.seed},
                 {"cdf_threshold", r.cdf_threshold},
                 {"cdf_reference", r.cdf_reference},
                 {"cdf_mean", r.cdf_mean},
                 {"cdf_rmse", r.cdf_rmse},
                 {"cdf_rmse_lo", r.cdf_rmse_lo},
                 {"cdf_rmse_hi", r.cdf_rmse_hi},
                 {"quantile_p", r.quantile_p},
                 {"quantile_reference", r.quantile_reference},
                 {"quantile_mean", r.quantile_mean},
                 {"quantile_rmse", r.quantile_rmse},
                 {"quantile_rmse_lo", r.quantile_rmse_lo},
                 {"quantile_rmse_hi", r.quantile_rmse_hi},
                 {"quantile_flagged", r.quantile_flagged}};
}

inline BenchmarkRecord benchmark_record_from_json(const ojson& j) {
    BenchmarkRecord r;
    j.at("estimator").get_to(r.estimator);
    j.at("grid").get_to(r.grid);
    j.at("grid_value").get_to(r.grid_value);
    j.at("epsilon").get_to(r.epsilon);
    j.at("tau").get_to(r.tau);
    j.at("J").get_to(r.J);
    j.at("K").get_to(r.K);
    j.at("R").get_to(r.R);
    j.at("q").get_to(r.q);
    j.at("J_levels").get_to(r.J_levels);
    j.at("planned_cost").get_to(r.planned_cost);
    j.at("realized_cost").get_to(r.realized_cost);
    j.at("replications").get_to(r.replications);
    j.at("seed").get_to(r.seed);
    j.at("cdf_threshold").get_to(r.cdf_threshold);
    j.at("cdf_reference").get_to(r.cdf_reference);
    j.at("cdf_mean").get_to(r.cdf_mean);
    j.at("cdf_rmse").get_to(r.cdf_rmse);
    j.at("cdf_rmse_lo").get_to(r.cdf_rmse_lo);
    j.at("cdf_rmse_hi").get_to(r.cdf_rmse_hi);
    j.at("quantile_p").get_to(r.quantile_p);
    j.at("quantile_reference").get_to(r.quantile_reference);
    j.at("quantile_mean").get_to(r.quantile_mean);
    j.at("quantile_rmse").get_to(r.quantile_rmse);
    j.at("quantile_rmse_lo").get_to(r.quantile_rmse_lo);
    j.at("quantile_rmse_hi").get_to(r.quantile_rmse_hi);
    j.at("quantile_flagged").get_to(r.quantile_flagged);
    return r;
}

inline ojson to_json(const TauSweepRecord& r) {
    return ojson{{"estimator", r.estimator},   {"tau", r.tau},
                 {"budget", r.budget},         {"epsilon_t1", r.epsilon_t1},
                 {"J_t1", r.J_t1},             {"K_t1", r.K_t1},
                 {"R_t1", r.R_t1},             {"cost_t1", r.cost_t1},
                 {"epsilon_t2", r.epsilon_t2}, {"J_t2", r.J_t2},
                 {"K_t2", r.K_t2},             {"R_t2", r.R_t2},
                 {"cost_t2", r.cost_t2},       {"replications", r.replications},
                 {"mse_t1", r.mse_t1},         {"mse_t2", r.mse_t2},
                 {"efficiency", r.efficiency}, {"efficiency_lo", r.efficiency_lo},
                 {"efficiency_hi", r.efficiency_hi}};
}

inline TauSweepRecord tau_sweep_record_from_json(const ojson& j) {
    TauSweepRecord r;
    j.at("estimator").get_to(r.estimator);
    j.at("tau").get_to(r.tau);
    j.at("budget").get_to(r.budget);
    j.at("epsilon_t1").get_to(r.epsilon_t1);
    j.at("J_t1").get_to(r.J_t1);
    j.at("K_t1").get_to(r.K_t1);
    j.at("R_t1").get_to(r.R_t1);
    j.at("cost_t1").get_to(r.cost_t1);
    j.at("epsilon_t2").get_to(r.epsilon_t2);
    j.at("J_t2").get_to(r.J_t2);
    j.at("K_t2").get_to(r.K_t2);
    j.at("R_t2").get_to(r.R_t2);
    j.at("cost_t2").get_to(r.cost_t2);
    j.at("replications").get_to(r.replications);
    j.at("mse_t1").get_to(r.mse_t1);
    j.at("mse_t2").get_to(r.mse_t2);
    j.at("efficiency").get_to(r.efficiency);
    j.at("efficiency_lo").get_to(r.efficiency_lo);
    j.at("efficiency_hi").get_to(r.efficiency_hi);
    return r;
}

inline ojson plan_to_json(const MlmcPlan& p, double eps, double tau) {
    std::vector<std::uint64_t> Jr, Kr;
    for (int r = 1; r <= p.R; ++r) {
        Jr.push_back(p.J_r(r));
        Kr.push_back(p.K_r(r));
    }
    return ojson{{"kind", std::string(to_string(p.kind))},
                 {"epsilon", eps},
                 {"tau", tau},
                 {"J", p.J},
                 {"q", p.q},
                 {"K", p.K},
                 {"R", p.R},
                 {"level_weights", p.level_weights},
                 {"J_levels", Jr},
                 {"K_levels", Kr},
                 {"approx_cost", p.J * cost_per_outer(p.q, p.K, p.R, tau)},
                 {"exact_cost", exact_cost(p, tau)}};
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string csv_cell(const ojson& v) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string out = "\"";
        for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return out + "\"";
    }
    if (v.is_array()) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ";" : "") + csv_cell(v[i]);
        return out;
    }
    if (v.is_number_float()) return fmt_double(v.get<double>());
    if (v.is_null()) return "";
    return v.dump();
}

} // namespace detail

// One header line, then one line per record, columns in the record's field order.
inline std::string to_csv(const std::vector<ojson>& rows) {
    std::ostringstream out;
    if (rows.empty()) return "";
    bool first = true;
    for (auto it = rows.front().begin(); it != rows.front().end(); ++it) {
        out << (first ? "" : ",") << it.key();
        first = false;
    }
    out << '\n';
    for (const auto& row : rows) {
        first = true;
        for (auto it = row.begin(); it != row.end(); ++it) {
            out << (first ? "" : ",") << detail::csv_cell(it.value());
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

inline std::string to_json_text(const std::vector<ojson>& rows) { return ojson(rows).dump(2) + "\n"; }

inline std::string csv_header(const ojson& row) {
    const auto text = to_csv({row});
    return text.substr(0, text.find('\n'));
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline ojson calibration_to_json(const CalibrationReport& rep) {
    auto fit = [](const ConstantFit& f) {
        return ojson{{"value", f.value}, {"ci_lo", f.ci_lo}, {"ci_hi", f.ci_hi}, {"se", f.se}, {"below_resolution", f.below_resolution}};
    };
    auto v1 = [&](const V1Fit& v) {
        return ojson{{"value", v.value}, {"ci_lo", v.ci_lo}, {"ci_hi", v.ci_hi}, {"regression", fit(v.fit)}, {"max_rescaled", v.max_rescaled}};
    };
    ojson rows = ojson::array();
    for (const auto& r : rep.rows) {
        rows.push_back(ojson{{"K", r.K},
                             {"n", r.n},
                             {"mean_level_antithetic", r.level_antithetic.mean},
                             {"se_level_antithetic", r.level_antithetic.mean_se},
                             {"var_level_antithetic", r.level_antithetic.var},
                             {"var_se_level_antithetic", r.level_antithetic.var_se},
                             {"mean_level_standard", r.level_standard.mean},
                             {"se_level_standard", r.level_standard.mean_se},
                             {"var_level_standard", r.level_standard.var},
                             {"var_se_level_standard", r.level_standard.var_se},
                             {"mean_second_difference", r.second_difference.mean},
                             {"se_second_difference", r.second_difference.mean_se},
                             {"mean_YK", r.mean_YK},
                             {"cost", r.cost}});
    }
    return ojson{{"schema_version", kSchemaVersion},
                 {"c1_hat", fit(rep.c1)},
                 {"c2_hat", fit(rep.c2)},
                 {"a_hat", {{"value", rep.a_hat}, {"ci_lo", rep.a_lo}, {"ci_hi", rep.a_hi}}},
                 {"V1_antithetic_hat", v1(rep.V1_antithetic)},
                 {"V1_standard_hat", v1(rep.V1_standard)},
                 {"I_rough", rep.I_rough},
                 {"sigma1_sq_hat", rep.sigma1_sq},
                 {"beta", rep.beta},
                 {"pilot_cost", rep.pilot_cost},
                 {"K_grid", rep.K_grid},
                 {"n_pilot", rep.n_pilot},
                 {"seed", rep.seed},
                 {"flags", rep.flags},
                 {"rows", rows}};
}

// Plan constants from a calibration report file written by `calibrate`.
inline StructuralConstants constants_from_calibration_json(const json& j, StructuralConstants base, const std::string& path) {
    try {
        CalibrationReport rep;
        rep.c1.value = j.at("c1_hat").at("value").get<double>();
        rep.V1_antithetic.value = j.at("V1_antithetic_hat").at("value").get<double>();
        rep.sigma1_sq = j.at("sigma1_sq_hat").get<double>();
        rep.a_hat = j.at("a_hat").at("value").get<double>();
        rep.a_lo = j.at("a_hat").at("ci_lo").get<double>();
        rep.a_hi = j.at("a_hat").at("ci_hi").get<double>();
        auto c = constants_from_report(rep, base);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": malformed calibration report: " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

inline ojson manifest(const std::string& subcommand, const ExperimentConfig& cfg, const std::string& effective,
                      const std::string& format, const std::string& output) {
    return ojson{{"tool", "rmlmc"},
                 {"tool_version", kToolVersion},
                 {"schema_version", kSchemaVersion},
                 {"subcommand", subcommand},
                 {"config_hash", hex64(fnv1a64(cfg.canonical + "|" + effective))},
                 {"effective_options", effective},
                 {"seed", cfg.seed},
                 {"threads", cfg.threads},
                 {"format", format},
                 {"output", output},
                 {"rmse_ci_method", kRmseCiMethod},
                 {"efficiency_ci_method", kEfficiencyCiMethod},
                 {"versions",
                  {{"compiler", __VERSION__},
                   {"cxx_standard", long(__cplusplus)},
                   {"boost", BOOST_LIB_VERSION},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
}

} // namespace rmlmc::bench
