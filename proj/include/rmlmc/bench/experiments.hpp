#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "../alm_model.hpp"
#include "../errors.hpp"
#include "../nested_core.hpp"
#include "../parallel.hpp"
#include "../plan_optimizer.hpp"
#include "../random.hpp"
#include "../stats.hpp"
#include "config.hpp"
#include "io.hpp"

namespace rmlmc::bench {

// Planned vs realized cost tolerance on emitted records.
inline constexpr double kCostTolerance = 0.05;

struct Targets {
    double u = 0.0;
    double p = 0.995;
    double cdf_reference = 0.0;
    double quantile_reference = 0.0;
};

// CDF threshold and references. Without user values the closed-form quantile serves as
// both the threshold and the quantile reference, and the CDF reference is p itself.
inline Targets resolve_targets(const ExperimentConfig& cfg, const AlmModel& model, bool need_references = true) {
    Targets t;
    t.p = cfg.target.p;
    std::optional<double> closed;
    if (model.monotone_certificate()) closed = model.scr_reference(1.0 - cfg.target.p);
    if (cfg.target.u) {
        t.u = *cfg.target.u;
    } else if (closed) {
        t.u = *closed;
    } else {
        throw ConfigError("config.target.u: required, the closed-form quantile is not available for these parameters");
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (cfg.target.reference_cdf) t.cdf_reference = *cfg.target.reference_cdf;
    else if (!cfg.target.u) t.cdf_reference = t.p;
    else if (!need_references) t.cdf_reference = nan;
    else throw ConfigError("config.target.reference_cdf: required when target.u is set explicitly");
    if (cfg.target.reference_quantile) t.quantile_reference = *cfg.target.reference_quantile;
    else if (closed) t.quantile_reference = *closed;
    else if (!need_references) t.quantile_reference = nan;
    else throw ConfigError("config.target.reference_quantile: required, no closed-form reference");
    return t;
}

inline StructuralConstants constants_for(const ExperimentConfig& cfg, double tau) {
    StructuralConstants c = cfg.constants;
    c.tau = tau;
    return c;
}

inline double epsilon_for_budget(EstimatorId e, const StructuralConstants& c, double K_floor, double budget) {
    return invert_budget([&](double eps) { return plan_for(e, c, eps, K_floor); }, c.tau, budget);
}

inline void check_cost_tolerance(const MlmcPlan& plan, double tau, const std::string& who) {
    const double planned = approx_total_cost(plan, tau);
    const double realized = exact_cost(plan, tau);
    if (std::fabs(realized - planned) > kCostTolerance * planned)
        throw InfeasiblePlan(who + ": realized cost " + std::to_string(realized) + " departs from planned cost " +
                             std::to_string(planned) + " by more than 5% (budget too small for integer rounding)");
}

struct ReplicationOutcome {
    std::vector<double> cdf;
    std::vector<double> quantile;
    std::uint64_t flagged = 0;
};

template <NestedProblem P>
ReplicationOutcome run_replications(const P& problem, const MlmcPlan& plan, const Targets& t, std::uint64_t base_seed,
                                    std::uint64_t M, unsigned threads) {
    ReplicationOutcome out;
    out.cdf.resize(M);
    out.quantile.resize(M);
    std::vector<char> flag(M, 0);
    parallel_for(M, threads, [&](std::size_t i) {
        const auto est = estimate_cdf_and_quantile(problem, plan, t.u, t.p, replication_seed(base_seed, i));
        out.cdf[i] = est.cdf_at_u;
        out.quantile[i] = est.quantile_at_p;
        flag[i] = est.status == MultilevelCdf::Status::Ok ? 0 : 1;
    });
    for (char f : flag) out.flagged += std::uint64_t(f);
    return out;
}

// Grid points in run order: explicit epsilons first, then budgets.
struct GridPoint {
    std::string kind;
    double value;
};

inline std::vector<GridPoint> benchmark_grid(const ExperimentConfig& cfg) {
    std::vector<GridPoint> g;
    for (double e : cfg.benchmark.epsilons) g.push_back({"epsilon", e});
    for (double b : cfg.benchmark.budgets) g.push_back({"budget", b});
    return g;
}

inline std::uint64_t benchmark_cell_seed(const ExperimentConfig& cfg, EstimatorId e, std::size_t grid_index) {
    return cell_seed(cfg.seed, std::uint64_t(e), grid_index);
}

// Every replication seed a benchmark run will use, in output order.
inline std::vector<std::uint64_t> benchmark_replication_seeds(const ExperimentConfig& cfg) {
    std::vector<std::uint64_t> seeds;
    const auto grid = benchmark_grid(cfg);
    for (auto e : cfg.estimators)
        for (std::size_t g = 0; g < grid.size(); ++g)
            for (std::uint64_t i = 0; i < cfg.benchmark.replications; ++i)
                seeds.push_back(replication_seed(benchmark_cell_seed(cfg, e, g), i));
    return seeds;
}

template <NestedProblem P>
std::vector<BenchmarkRecord> run_benchmark(const ExperimentConfig& cfg, const P& problem, const Targets& t) {
    std::vector<BenchmarkRecord> records;
    const auto c = constants_for(cfg, cfg.tau);
    const auto grid = benchmark_grid(cfg);
    for (auto e : cfg.estimators) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double eps = grid[g].kind == "epsilon" ? grid[g].value : epsilon_for_budget(e, c, cfg.K_floor, grid[g].value);
            const auto plan = plan_for(e, c, eps, cfg.K_floor);
            check_cost_tolerance(plan, cfg.tau, to_string(e));
            const auto seed = benchmark_cell_seed(cfg, e, g);
            const auto rep = run_replications(problem, plan, t, seed, cfg.benchmark.replications, cfg.threads);
            const auto ce = error_summary(rep.cdf, t.cdf_reference);
            const auto qe = error_summary(rep.quantile, t.quantile_reference);
            BenchmarkRecord r;
            r.estimator = to_string(e);
            r.grid = grid[g].kind;
            r.grid_value = grid[g].value;
            r.epsilon = eps;
            r.tau = cfg.tau;
            r.J = plan.J;
            r.K = plan.K;
            r.R = plan.R;
            r.q = plan.q;
            for (int l = 1; l <= plan.R; ++l) r.J_levels.push_back(plan.J_r(l));
            r.planned_cost = approx_total_cost(plan, cfg.tau);
            r.realized_cost = exact_cost(plan, cfg.tau);
            r.replications = cfg.benchmark.replications;
            r.seed = seed;
            r.cdf_threshold = t.u;
            r.cdf_reference = t.cdf_reference;
            r.cdf_mean = ce.mean;
            r.cdf_rmse = ce.rmse;
            r.cdf_rmse_lo = ce.rmse_ci.lo;
            r.cdf_rmse_hi = ce.rmse_ci.hi;
            r.quantile_p = t.p;
            r.quantile_reference = t.quantile_reference;
            r.quantile_mean = qe.mean;
            r.quantile_rmse = qe.rmse;
            r.quantile_rmse_lo = qe.rmse_ci.lo;
            r.quantile_rmse_hi = qe.rmse_ci.hi;
            r.quantile_flagged = rep.flagged;
            records.push_back(std::move(r));
        }
    }
    return records;
}

// Closed-form and optimized plans at a fixed budget for each tau; with M > 0 also the
// empirical MSE of both on the CDF target and their ratio.
template <NestedProblem P>
std::vector<TauSweepRecord> run_tau_sweep(const ExperimentConfig& cfg, const P& problem, const Targets& t, bool plans_only) {
    const bool ml2r = cfg.tau_sweep.estimator == "ml2r";
    const EstimatorId e1 = ml2r ? EstimatorId::ML2R_T1 : EstimatorId::MLMC_T1;
    const EstimatorId e2 = ml2r ? EstimatorId::ML2R_T2 : EstimatorId::MLMC_T2;
    std::vector<TauSweepRecord> out;
    for (std::size_t i = 0; i < cfg.tau_sweep.taus.size(); ++i) {
        const double tau = cfg.tau_sweep.taus[i];
        const auto c = constants_for(cfg, tau);
        TauSweepRecord r;
        r.estimator = cfg.tau_sweep.estimator;
        r.tau = tau;
        r.budget = cfg.tau_sweep.budget;
        try {
            r.epsilon_t1 = epsilon_for_budget(e1, c, cfg.K_floor, r.budget);
            r.epsilon_t2 = epsilon_for_budget(e2, c, cfg.K_floor, r.budget);
        } catch (const InfeasiblePlan& ex) {
            throw InfeasiblePlan("tau = " + std::to_string(tau) + ": " + ex.what());
        }
        const auto p1 = plan_for(e1, c, r.epsilon_t1, cfg.K_floor);
        const auto p2 = plan_for(e2, c, r.epsilon_t2, cfg.K_floor);
        r.J_t1 = p1.J;
        r.K_t1 = p1.K;
        r.R_t1 = p1.R;
        r.cost_t1 = approx_total_cost(p1, tau);
        r.J_t2 = p2.J;
        r.K_t2 = p2.K;
        r.R_t2 = p2.R;
        r.cost_t2 = approx_total_cost(p2, tau);
        if (!plans_only) {
            check_cost_tolerance(p1, tau, to_string(e1));
            check_cost_tolerance(p2, tau, to_string(e2));
            const std::uint64_t M = cfg.tau_sweep.replications;
            const auto o1 = run_replications(problem, p1, t, cell_seed(cfg.seed, 100 + i, 1), M, cfg.threads);
            const auto o2 = run_replications(problem, p2, t, cell_seed(cfg.seed, 100 + i, 2), M, cfg.threads);
            r.replications = M;
            r.mse_t1 = error_summary(o1.cdf, t.cdf_reference).mse;
            r.mse_t2 = error_summary(o2.cdf, t.cdf_reference).mse;
            r.efficiency = r.mse_t1 / r.mse_t2;
            const auto ci = mse_ratio_ci(r.mse_t1, M, r.mse_t2, M, 0.90);
            r.efficiency_lo = ci.lo;
            r.efficiency_hi = ci.hi;
        }
        out.push_back(r);
    }
    return out;
}

} // namespace rmlmc::bench
