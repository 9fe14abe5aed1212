#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../alm_model.hpp"
#include "../calibration.hpp"
#include "../errors.hpp"
#include "../plan_optimizer.hpp"

namespace rmlmc::bench {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// The five estimator/parameter combinations compared by the benchmark.
enum class EstimatorId { Nested, ML2R_T2, MLMC_T2, ML2R_T1, MLMC_T1 };

inline std::string to_string(EstimatorId e) {
    switch (e) {
    case EstimatorId::Nested: return "nested";
    case EstimatorId::ML2R_T2: return "ml2r-t2";
    case EstimatorId::MLMC_T2: return "mlmc-t2";
    case EstimatorId::ML2R_T1: return "ml2r-t1";
    default: return "mlmc-t1";
    }
}

inline EstimatorId estimator_id_from_string(const std::string& s, const std::string& path) {
    for (auto e : {EstimatorId::Nested, EstimatorId::ML2R_T2, EstimatorId::MLMC_T2, EstimatorId::ML2R_T1, EstimatorId::MLMC_T1})
        if (to_string(e) == s) return e;
    throw ConfigError(path + ": unknown estimator '" + s + "'");
}

inline const std::vector<EstimatorId>& all_estimators() {
    static const std::vector<EstimatorId> v{EstimatorId::Nested, EstimatorId::ML2R_T2, EstimatorId::MLMC_T2,
                                            EstimatorId::ML2R_T1, EstimatorId::MLMC_T1};
    return v;
}

inline MlmcPlan plan_for(EstimatorId e, const StructuralConstants& c, double eps, double K_floor) {
    OptimizerOptions opt;
    opt.K_floor = K_floor;
    switch (e) {
    case EstimatorId::Nested: return plan_optimized(c, eps, EstimatorKind::Nested, opt);
    case EstimatorId::ML2R_T2: return plan_optimized(c, eps, EstimatorKind::ML2R, opt);
    case EstimatorId::MLMC_T2: return plan_optimized(c, eps, EstimatorKind::StandardMLMC, opt);
    case EstimatorId::ML2R_T1: return plan_closed_form(c, eps, EstimatorKind::ML2R, K_floor);
    default: return plan_closed_form(c, eps, EstimatorKind::StandardMLMC, K_floor);
    }
}

struct TargetConfig {
    double p = 0.995;
    std::optional<double> u;                  // CDF threshold; closed-form quantile when unset
    std::optional<double> reference_cdf;      // defaults to p when u is the closed-form quantile
    std::optional<double> reference_quantile; // defaults to the closed-form quantile
};

struct BenchmarkConfig {
    std::vector<double> epsilons;
    std::vector<double> budgets;
    std::uint64_t replications = 64;
};

struct TauSweepConfig {
    double budget = 1e7;
    std::vector<double> taus{0, 25, 50, 75, 100};
    std::uint64_t replications = 64;
    std::string estimator = "ml2r";
};

struct CalibrationConfig {
    std::uint64_t n_pilot = 1000000;
    std::vector<std::uint64_t> K_grid{8, 16, 32, 64, 128};
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    MarketParams market;
    ContractParams contract;
    double tau = 0.0;
    StructuralConstants constants;
    std::optional<std::string> constants_file;
    double K_floor = 10.0;
    TargetConfig target;
    std::vector<EstimatorId> estimators = all_estimators();
    BenchmarkConfig benchmark;
    TauSweepConfig tau_sweep;
    CalibrationConfig calibration;
    std::uint64_t seed = 20240601;
    unsigned threads = 1;
    std::string canonical;  // normalized JSON text, hashed into the manifest
};

namespace detail {

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(path + "." + it.key() + ": unknown field");
    }
}

inline double get_number(const json& j, const char* key, const std::string& path, double def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return v.get<double>();
}

inline std::uint64_t get_count(const json& j, const char* key, const std::string& path, std::uint64_t def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return std::uint64_t(v.get<std::int64_t>());
    if (v.is_number_float() && v.get<double>() >= 0 && v.get<double>() == std::floor(v.get<double>()) && v.get<double>() < 1.8e19)
        return std::uint64_t(v.get<double>());
    throw ConfigError(path + "." + key + ": expected a non-negative integer");
}

inline std::vector<double> get_numbers(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key)) return {};
    const auto& v = j.at(key);
    if (!v.is_array()) throw ConfigError(path + "." + key + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ConfigError(path + "." + key + "[" + std::to_string(i) + "]: expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

template <class E>
void rethrow_at(const std::string& path, E&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        // validators name fields relative to their own section
        const auto dot = msg.find('.');
        throw ConfigError(path + msg.substr(dot == std::string::npos ? 0 : dot));
    }
}

} // namespace detail

inline void constants_from_json(const json& j, const std::string& path, StructuralConstants& c) {
    detail::check_keys(j, path, {"alpha", "beta", "c1", "growth_a", "c_tilde", "V1", "sigma1_sq"});
    c.alpha = detail::get_number(j, "alpha", path, c.alpha);
    c.beta = detail::get_number(j, "beta", path, c.beta);
    c.c1 = detail::get_number(j, "c1", path, c.c1);
    c.growth_a = detail::get_number(j, "growth_a", path, c.growth_a);
    if (j.contains("c_tilde") && !j.at("c_tilde").is_null()) c.c_tilde = detail::get_number(j, "c_tilde", path, 0.0);
    c.V1 = detail::get_number(j, "V1", path, c.V1);
    c.sigma1_sq = detail::get_number(j, "sigma1_sq", path, c.sigma1_sq);
}

inline json constants_to_json(const StructuralConstants& c) {
    json j{{"alpha", c.alpha}, {"beta", c.beta}, {"c1", c.c1}, {"growth_a", c.growth_a},
           {"V1", c.V1},       {"sigma1_sq", c.sigma1_sq}};
    j["c_tilde"] = c.c_tilde ? json(*c.c_tilde) : json(nullptr);
    return j;
}

inline ExperimentConfig parse_config(const json& root) {
    ExperimentConfig cfg;
    const std::string P = "config";
    detail::check_keys(root, P, {"schema_version", "problem", "tau", "constants", "constants_file", "K_floor", "target",
                                 "estimators", "benchmark", "tau_sweep", "calibration", "seed", "threads"});
    if (!root.contains("schema_version")) throw ConfigError(P + ".schema_version: missing");
    if (!root.at("schema_version").is_number_integer() || root.at("schema_version").get<int>() != kSchemaVersion)
        throw ConfigError(P + ".schema_version: unsupported version (expected " + std::to_string(kSchemaVersion) + ")");

    if (root.contains("problem")) {
        const auto& pj = root.at("problem");
        const std::string pp = P + ".problem";
        detail::check_keys(pj, pp, {"kind", "market", "contract"});
        if (pj.contains("kind") && pj.at("kind") != "alm") throw ConfigError(pp + ".kind: only 'alm' is supported");
        if (pj.contains("market")) {
            const auto& m = pj.at("market");
            const std::string mp = pp + ".market";
            detail::check_keys(m, mp, {"r", "sigma", "mu", "s0"});
            cfg.market.r = detail::get_number(m, "r", mp, cfg.market.r);
            cfg.market.sigma = detail::get_number(m, "sigma", mp, cfg.market.sigma);
            cfg.market.mu = detail::get_number(m, "mu", mp, cfg.market.mu);
            cfg.market.s0 = detail::get_number(m, "s0", mp, cfg.market.s0);
        }
        if (pj.contains("contract")) {
            const auto& c = pj.at("contract");
            const std::string cp = pp + ".contract";
            detail::check_keys(c, cp, {"T", "r_g", "gamma", "p", "MR0"});
            if (c.contains("T") && !c.at("T").is_number_integer()) throw ConfigError(cp + ".T: expected an integer");
            cfg.contract.T = c.value("T", cfg.contract.T);
            cfg.contract.r_g = detail::get_number(c, "r_g", cp, cfg.contract.r_g);
            cfg.contract.gamma = detail::get_number(c, "gamma", cp, cfg.contract.gamma);
            cfg.contract.p = detail::get_number(c, "p", cp, cfg.contract.p);
            cfg.contract.MR0 = detail::get_number(c, "MR0", cp, cfg.contract.MR0);
        }
        detail::rethrow_at(pp + ".market", [&] { cfg.market.validate(); });
        detail::rethrow_at(pp + ".contract", [&] { cfg.contract.validate(); });
    }

    cfg.tau = detail::get_number(root, "tau", P, cfg.tau);
    if (!(cfg.tau >= 0.0)) throw ConfigError(P + ".tau: must be >= 0");
    cfg.constants.tau = cfg.tau;

    if (root.contains("constants")) constants_from_json(root.at("constants"), P + ".constants", cfg.constants);
    if (root.contains("constants_file")) {
        if (!root.at("constants_file").is_string()) throw ConfigError(P + ".constants_file: expected a path");
        cfg.constants_file = root.at("constants_file").get<std::string>();
    }
    detail::rethrow_at(P + ".constants", [&] { cfg.constants.validate(); });

    cfg.K_floor = detail::get_number(root, "K_floor", P, cfg.K_floor);
    if (!(cfg.K_floor >= 1.0) || cfg.K_floor != std::floor(cfg.K_floor)) throw ConfigError(P + ".K_floor: expected a positive integer");

    if (root.contains("target")) {
        const auto& t = root.at("target");
        const std::string tp = P + ".target";
        detail::check_keys(t, tp, {"p", "u", "reference_cdf", "reference_quantile"});
        cfg.target.p = detail::get_number(t, "p", tp, cfg.target.p);
        if (!(cfg.target.p > 0.0 && cfg.target.p < 1.0)) throw ConfigError(tp + ".p: must lie in (0, 1)");
        auto opt = [&](const char* k) -> std::optional<double> {
            if (!t.contains(k) || t.at(k).is_null()) return std::nullopt;
            return detail::get_number(t, k, tp, 0.0);
        };
        cfg.target.u = opt("u");
        cfg.target.reference_cdf = opt("reference_cdf");
        cfg.target.reference_quantile = opt("reference_quantile");
    }

    if (root.contains("estimators")) {
        const auto& e = root.at("estimators");
        if (!e.is_array() || e.empty()) throw ConfigError(P + ".estimators: expected a non-empty array");
        cfg.estimators.clear();
        for (std::size_t i = 0; i < e.size(); ++i) {
            const std::string ep = P + ".estimators[" + std::to_string(i) + "]";
            if (!e[i].is_string()) throw ConfigError(ep + ": expected a string");
            cfg.estimators.push_back(estimator_id_from_string(e[i].get<std::string>(), ep));
        }
    }

    if (root.contains("benchmark")) {
        const auto& b = root.at("benchmark");
        const std::string bp = P + ".benchmark";
        detail::check_keys(b, bp, {"epsilons", "budgets", "replications"});
        cfg.benchmark.epsilons = detail::get_numbers(b, "epsilons", bp);
        cfg.benchmark.budgets = detail::get_numbers(b, "budgets", bp);
        cfg.benchmark.replications = detail::get_count(b, "replications", bp, cfg.benchmark.replications);
        for (double e : cfg.benchmark.epsilons)
            if (!(e > 0.0)) throw ConfigError(bp + ".epsilons: entries must be positive");
        for (double e : cfg.benchmark.budgets)
            if (!(e > 0.0)) throw ConfigError(bp + ".budgets: entries must be positive");
        if (cfg.benchmark.replications < 2) throw ConfigError(bp + ".replications: must be >= 2");
    }
    if (cfg.benchmark.epsilons.empty() && cfg.benchmark.budgets.empty()) cfg.benchmark.budgets = {1e7};

    if (root.contains("tau_sweep")) {
        const auto& s = root.at("tau_sweep");
        const std::string sp = P + ".tau_sweep";
        detail::check_keys(s, sp, {"budget", "taus", "replications", "estimator"});
        cfg.tau_sweep.budget = detail::get_number(s, "budget", sp, cfg.tau_sweep.budget);
        if (s.contains("taus")) cfg.tau_sweep.taus = detail::get_numbers(s, "taus", sp);
        cfg.tau_sweep.replications = detail::get_count(s, "replications", sp, cfg.tau_sweep.replications);
        if (s.contains("estimator")) {
            if (!s.at("estimator").is_string()) throw ConfigError(sp + ".estimator: expected a string");
            cfg.tau_sweep.estimator = s.at("estimator").get<std::string>();
        }
        if (!(cfg.tau_sweep.budget > 0.0)) throw ConfigError(sp + ".budget: must be positive");
        if (cfg.tau_sweep.taus.empty()) throw ConfigError(sp + ".taus: must not be empty");
        for (double t : cfg.tau_sweep.taus)
            if (!(t >= 0.0)) throw ConfigError(sp + ".taus: entries must be >= 0");
        if (cfg.tau_sweep.replications < 2) throw ConfigError(sp + ".replications: must be >= 2");
        if (cfg.tau_sweep.estimator != "ml2r" && cfg.tau_sweep.estimator != "mlmc")
            throw ConfigError(sp + ".estimator: expected 'ml2r' or 'mlmc'");
    }

    if (root.contains("calibration")) {
        const auto& c = root.at("calibration");
        const std::string cp = P + ".calibration";
        detail::check_keys(c, cp, {"n_pilot", "K_grid"});
        cfg.calibration.n_pilot = detail::get_count(c, "n_pilot", cp, cfg.calibration.n_pilot);
        if (c.contains("K_grid")) {
            cfg.calibration.K_grid.clear();
            for (double k : detail::get_numbers(c, "K_grid", cp)) {
                if (!(k >= 1.0) || k != std::floor(k)) throw ConfigError(cp + ".K_grid: entries must be positive integers");
                cfg.calibration.K_grid.push_back(std::uint64_t(k));
            }
        }
        if (cfg.calibration.n_pilot < 1000) throw ConfigError(cp + ".n_pilot: must be >= 1000");
        for (std::size_t i = 1; i < cfg.calibration.K_grid.size(); ++i)
            if (cfg.calibration.K_grid[i] <= cfg.calibration.K_grid[i - 1])
                throw ConfigError(cp + ".K_grid: must be strictly increasing");
        if (cfg.calibration.K_grid.empty()) throw ConfigError(cp + ".K_grid: must not be empty");
    }

    cfg.seed = detail::get_count(root, "seed", P, cfg.seed);
    cfg.threads = unsigned(detail::get_count(root, "threads", P, cfg.threads));
    if (cfg.threads < 1) throw ConfigError(P + ".threads: must be >= 1");
    cfg.canonical = root.dump();
    return cfg;
}

inline ExperimentConfig default_config() { return parse_config(json{{"schema_version", kSchemaVersion}}); }

inline json read_json_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(what + ": cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": parse error in '" + path + "': " + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path, "config")); }

} // namespace rmlmc::bench
