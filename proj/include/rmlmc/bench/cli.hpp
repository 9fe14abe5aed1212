#pragma once

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "../alm_model.hpp"
#include "../calibration.hpp"
#include "../errors.hpp"
#include "../nested_core.hpp"
#include "../plan_optimizer.hpp"
#include "config.hpp"
#include "experiments.hpp"
#include "io.hpp"

namespace rmlmc::bench {

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitInfeasible = 3, kExitNumerical = 4 };

namespace detail {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
    std::string format;
};

inline std::string pick_format(const GlobalOptions& g, const char* fallback) { return g.format.empty() ? fallback : g.format; }

// Writes the payload to --out (or stdout) and the manifest beside it.
inline void emit(const GlobalOptions& g, const std::string& sub, const ExperimentConfig& cfg, const std::string& effective,
                 const std::string& format, const std::string& text, std::ostream& out) {
    std::string manifest_path;
    if (g.out.empty()) {
        out << text;
        manifest_path = "rmlmc-" + sub + ".manifest.json";
    } else {
        write_text(g.out, text);
        manifest_path = g.out + ".manifest.json";
    }
    write_text(manifest_path, manifest(sub, cfg, effective, format, g.out.empty() ? "stdout" : g.out).dump(2) + "\n");
}

inline std::string key_value_csv(const ojson& obj) {
    std::string s = "key,value\n";
    for (auto it = obj.begin(); it != obj.end(); ++it) s += it.key() + "," + csv_cell(it.value()) + "\n";
    return s;
}

} // namespace detail

inline int cli_entry(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Nested, multilevel and weighted multilevel Monte Carlo risk estimation", "rmlmc"};
    app.require_subcommand(1);
    detail::GlobalOptions g;
    std::uint64_t seed_value = 0;
    unsigned threads_value = 1;
    app.add_option("--config", g.config, "JSON configuration file");
    auto* seed_opt = app.add_option("--seed", seed_value, "base random seed");
    auto* thr_opt = app.add_option("--threads", threads_value, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "output file (default: stdout)");
    app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    app.fallthrough();

    auto* cal = app.add_subcommand("calibrate", "estimate structural constants from a pilot run");
    std::optional<std::uint64_t> n_pilot;
    std::vector<std::uint64_t> k_grid;
    cal->add_option("--n-pilot", n_pilot, "outer draws per K");
    cal->add_option("--k-grid", k_grid, "base inner sizes")->delimiter(',');

    auto* plan = app.add_subcommand("plan", "print estimator parameters");
    double plan_eps = 0.0, plan_budget = 0.0;
    std::optional<double> plan_tau;
    std::string plan_est = "ml2r-t2";
    auto* eps_opt = plan->add_option("--epsilon", plan_eps, "target RMSE")->check(CLI::PositiveNumber);
    auto* bud_opt = plan->add_option("--budget", plan_budget, "computational budget in inner-sample units")->check(CLI::PositiveNumber);
    eps_opt->excludes(bud_opt);
    plan->add_option("--tau", plan_tau, "outer/inner cost ratio")->check(CLI::NonNegativeNumber);
    plan->add_option("--estimator", plan_est, "nested|ml2r-t2|mlmc-t2|ml2r-t1|mlmc-t1");

    auto* est = app.add_subcommand("estimate", "run one estimation");
    double est_eps = 0.0, est_budget = 0.0;
    std::string est_id = "ml2r-t2", target = "both";
    std::optional<double> est_u, est_p;
    auto* est_eps_opt = est->add_option("--epsilon", est_eps, "target RMSE")->check(CLI::PositiveNumber);
    auto* est_bud_opt = est->add_option("--budget", est_budget, "budget")->check(CLI::PositiveNumber);
    est_eps_opt->excludes(est_bud_opt);
    est->add_option("--estimator", est_id, "nested|ml2r-t2|mlmc-t2|ml2r-t1|mlmc-t1");
    est->add_option("--target", target, "cdf|quantile|both")->check(CLI::IsMember({"cdf", "quantile", "both"}));
    est->add_option("--u", est_u, "CDF threshold (default: closed-form quantile)");
    est->add_option("--p", est_p, "quantile level")->check(CLI::Range(0.0, 1.0));

    auto* benchmark = app.add_subcommand("benchmark", "RMSE of the five estimators over an epsilon or budget grid");
    auto* sweep = app.add_subcommand("tau-sweep", "closed-form vs optimized parameters across tau at fixed budget");
    bool plans_only = false;
    std::optional<double> sweep_budget;
    sweep->add_flag("--plans-only", plans_only, "parameters only, no sampling");
    sweep->add_option("--budget", sweep_budget, "budget")->check(CLI::PositiveNumber);

    auto* ref = app.add_subcommand("alm-reference", "closed-form oracles of the ALM model");
    double ref_alpha = 0.005;
    ref->add_option("--alpha", ref_alpha, "tail probability")->check(CLI::Range(0.0, 1.0));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        ExperimentConfig cfg = g.config.empty() ? default_config() : load_config(g.config);
        if (*seed_opt) cfg.seed = seed_value;
        if (*thr_opt) cfg.threads = threads_value;
        if (cfg.constants_file)
            cfg.constants = constants_from_calibration_json(read_json_file(*cfg.constants_file, "config.constants_file"),
                                                            cfg.constants, "config.constants_file");
        const AlmModel model(cfg.market, cfg.contract, cfg.tau);
        std::ostringstream eff;

        if (*ref) {
            ojson o{{"z", model.z()},
                    {"psi0", model.psi0()},
                    {"x1", model.x1()},
                    {"x2", model.x2()},
                    {"certificate", model.monotone_certificate()},
                    {"alpha", ref_alpha}};
            o["scr_quantile"] = model.monotone_certificate() ? ojson(model.scr_reference(ref_alpha)) : ojson(nullptr);
            eff << "alpha=" << ref_alpha;
            const auto fmt = detail::pick_format(g, "json");
            detail::emit(g, "alm-reference", cfg, eff.str(), fmt, fmt == "json" ? o.dump(2) + "\n" : detail::key_value_csv(o), out);
            return kExitOk;
        }

        if (*cal) {
            if (n_pilot) cfg.calibration.n_pilot = *n_pilot;
            if (!k_grid.empty()) cfg.calibration.K_grid = k_grid;
            const auto t = resolve_targets(cfg, model, false);
            const auto rep = calibrate(model, PayoffTransform::indicator(t.u), cfg.calibration.K_grid, cfg.calibration.n_pilot,
                                       cfg.seed, cfg.threads);
            eff << "n_pilot=" << cfg.calibration.n_pilot << ";u=" << t.u;
            const auto fmt = detail::pick_format(g, "json");
            const auto report = calibration_to_json(rep);
            if (fmt == "json") {
                detail::emit(g, "calibrate", cfg, eff.str(), fmt, report.dump(2) + "\n", out);
            } else {
                std::vector<ojson> rows(report.at("rows").begin(), report.at("rows").end());
                detail::emit(g, "calibrate", cfg, eff.str(), fmt, to_csv(rows), out);
                if (!g.out.empty()) write_text(g.out + ".report.json", report.dump(2) + "\n");
            }
            return kExitOk;
        }

        if (*plan) {
            const double tau = plan_tau.value_or(cfg.tau);
            const auto c = constants_for(cfg, tau);
            const auto id = estimator_id_from_string(plan_est, "--estimator");
            if (!*eps_opt && !*bud_opt) throw ConfigError("plan: one of --epsilon or --budget is required");
            const double eps = *eps_opt ? plan_eps : epsilon_for_budget(id, c, cfg.K_floor, plan_budget);
            const auto p = plan_for(id, c, eps, cfg.K_floor);
            if (*bud_opt) check_cost_tolerance(p, tau, to_string(id));
            auto o = plan_to_json(p, eps, tau);
            o["estimator"] = to_string(id);
            o["mse_proxy"] = mse_proxy(c, p);
            o["mu_tilde"] = mu_tilde(c, p.K, p.R, p.kind);
            eff << "estimator=" << plan_est << ";epsilon=" << eps << ";tau=" << tau;
            const auto fmt = detail::pick_format(g, "json");
            detail::emit(g, "plan", cfg, eff.str(), fmt, fmt == "json" ? o.dump(2) + "\n" : to_csv({o}), out);
            return kExitOk;
        }

        if (*est) {
            const auto c = constants_for(cfg, cfg.tau);
            const auto id = estimator_id_from_string(est_id, "--estimator");
            if (est_p) cfg.target.p = *est_p;
            if (est_u) cfg.target.u = *est_u;
            const auto t = resolve_targets(cfg, model, false);
            double eps;
            if (*est_eps_opt) eps = est_eps;
            else eps = epsilon_for_budget(id, c, cfg.K_floor, *est_bud_opt ? est_budget : 1e7);
            const auto p = plan_for(id, c, eps, cfg.K_floor);
            if (!*est_eps_opt) check_cost_tolerance(p, cfg.tau, to_string(id));
            const auto r = estimate_cdf_and_quantile(model, p, t.u, t.p, cfg.seed, {cfg.threads});
            ojson o{{"estimator", to_string(id)}, {"seed", cfg.seed}, {"plan", plan_to_json(p, eps, cfg.tau)}};
            if (target != "quantile") o["cdf_at_u"] = {{"u", t.u}, {"estimate", r.cdf_at_u}};
            if (target != "cdf")
                o["quantile_at_p"] = {{"p", t.p}, {"estimate", r.quantile_at_p}, {"status", std::string(to_string(r.status))}, {"crossings", r.crossings}};
            o["consumed_cost"] = r.result.consumed_cost;
            eff << "estimator=" << est_id << ";epsilon=" << eps << ";target=" << target;
            const auto fmt = detail::pick_format(g, "json");
            detail::emit(g, "estimate", cfg, eff.str(), fmt, fmt == "json" ? o.dump(2) + "\n" : detail::key_value_csv(o), out);
            return kExitOk;
        }

        if (*benchmark) {
            const auto t = resolve_targets(cfg, model);
            const auto recs = run_benchmark(cfg, model, t);
            std::vector<ojson> rows;
            for (const auto& r : recs) rows.push_back(to_json(r));
            const auto fmt = detail::pick_format(g, "csv");
            eff << "replications=" << cfg.benchmark.replications;
            detail::emit(g, "benchmark", cfg, eff.str(), fmt, fmt == "json" ? to_json_text(rows) : to_csv(rows), out);
            return kExitOk;
        }

        if (*sweep) {
            if (sweep_budget) cfg.tau_sweep.budget = *sweep_budget;
            const auto t = resolve_targets(cfg, model);
            const auto recs = run_tau_sweep(cfg, model, t, plans_only);
            std::vector<ojson> rows;
            for (const auto& r : recs) rows.push_back(to_json(r));
            const auto fmt = detail::pick_format(g, "csv");
            eff << "budget=" << cfg.tau_sweep.budget << ";plans_only=" << plans_only;
            detail::emit(g, "tau-sweep", cfg, eff.str(), fmt, fmt == "json" ? to_json_text(rows) : to_csv(rows), out);
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InfeasiblePlan& e) {
        err << "infeasible plan: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::domain_error& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}

} // namespace rmlmc::bench
