#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "ml2r_weights.hpp"
#include "plan.hpp"

namespace rmlmc {

struct StructuralConstants {
    double alpha = 1.0;
    double beta = 0.5;
    double c1 = 0.025;
    double growth_a = 2.0;
    // Proxy for the limit constant used by the closed-form parameters. Unset means growth_a.
    std::optional<double> c_tilde;
    double V1 = 0.01;
    double sigma1_sq = 0.005;
    double tau = 0.0;

    double c_tilde_value() const { return c_tilde.value_or(growth_a); }

    // c_R = c1 a^(R-1)
    double c_R(int R) const { return c1 * std::pow(growth_a, R - 1); }

    void validate() const {
        auto pos = [](double v) { return v > 0.0 && std::isfinite(v); };
        if (!pos(alpha)) throw ConfigError("constants.alpha must be positive");
        if (!(beta > 0.0 && beta <= 2.0)) throw ConfigError("constants.beta must lie in (0, 2]");
        if (!(c1 != 0.0) || !std::isfinite(c1)) throw ConfigError("constants.c1 must be non-zero");
        if (!(growth_a > 1.0) || !std::isfinite(growth_a)) throw ConfigError("constants.growth_a must exceed 1");
        if (c_tilde && !pos(*c_tilde)) throw ConfigError("constants.c_tilde must be positive");
        if (!pos(V1)) throw ConfigError("constants.V1 must be positive");
        if (!pos(sigma1_sq)) throw ConfigError("constants.sigma1_sq must be positive");
        if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("constants.tau must be >= 0");
    }
};

inline double gamma_tau(double tau, double K) { return tau + K; }

// ceil(K) 2^(r-1), 1-based r
inline double level_inner_size(double K, int r) { return std::ceil(K) * std::exp2(r - 1); }

inline double cost_per_outer(const std::vector<double>& q, double K, int R, double tau) {
    double k = 0.0;
    for (int r = 1; r <= R; ++r) k += q[r - 1] * gamma_tau(tau, level_inner_size(K, r));
    return k;
}

inline double approx_total_cost(const MlmcPlan& plan, double tau) { return plan.J * cost_per_outer(plan.q, plan.K, plan.R, tau); }

inline double mu_tilde(const StructuralConstants& c, double K, int R, EstimatorKind kind) {
    const double Kc = std::ceil(K);
    if (kind == EstimatorKind::ML2R) {
        const double sign = (R - 1) % 2 == 0 ? 1.0 : -1.0;
        return sign * c.c_R(R) / (std::pow(Kc, c.alpha * R) * std::exp2(c.alpha * R * (R - 1) / 2.0));
    }
    return c.c1 / (std::pow(Kc, c.alpha) * std::exp2((R - 1) * c.alpha));
}

// sigma_bar(r, K): first level from sigma1_sq, upper levels |A_r| sqrt(V1) / K_r^(beta/2).
inline std::vector<double> sigma_bars(const StructuralConstants& c, double K, int R, EstimatorKind kind) {
    const auto A = level_weights_for(kind, R, c.alpha);
    std::vector<double> s(R);
    s[0] = std::sqrt(c.sigma1_sq);
    for (int r = 2; r <= R; ++r) s[r - 1] = std::fabs(A[r - 1]) * std::sqrt(c.V1) / std::pow(level_inner_size(K, r), c.beta / 2.0);
    return s;
}

struct OptimalAllocation {
    std::vector<double> q;
    double mu = 0.0;
};

inline OptimalAllocation optimal_q(const StructuralConstants& c, double K, int R, EstimatorKind kind) {
    const auto s = sigma_bars(c, K, R, kind);
    OptimalAllocation out;
    out.q.resize(R);
    for (int r = 1; r <= R; ++r) {
        out.q[r - 1] = s[r - 1] / std::sqrt(gamma_tau(c.tau, level_inner_size(K, r)));
        out.mu += out.q[r - 1];
    }
    for (double& v : out.q) v /= out.mu;
    return out;
}

inline double v_bar(const StructuralConstants& c, const std::vector<double>& q, double K, int R, EstimatorKind kind) {
    const auto s = sigma_bars(c, K, R, kind);
    double v = 0.0;
    for (int r = 0; r < R; ++r) v += s[r] * s[r] / q[r];
    return v;
}

// Effort of an allocation: v_bar * kappa_tau.
inline double phi_bar(const StructuralConstants& c, const std::vector<double>& q, double K, int R, EstimatorKind kind) {
    return v_bar(c, q, K, R, kind) * cost_per_outer(q, K, R, c.tau);
}

inline double phi_bar_star(const StructuralConstants& c, double K, int R, EstimatorKind kind) {
    const auto s = sigma_bars(c, K, R, kind);
    double a = 0.0;
    for (int r = 1; r <= R; ++r) a += s[r - 1] * std::sqrt(gamma_tau(c.tau, level_inner_size(K, r)));
    return a * a;
}

inline double optimal_J(const StructuralConstants& c, const std::vector<double>& q, double K, int R, double eps,
                        EstimatorKind kind) {
    const double m = mu_tilde(c, K, R, kind);
    if (!(std::fabs(m) < eps))
        throw InfeasiblePlan("bias proxy |mu_tilde| = " + std::to_string(std::fabs(m)) + " is not below epsilon = " +
                             std::to_string(eps) + " (K = " + std::to_string(K) + ", R = " + std::to_string(R) + ")");
    return v_bar(c, q, K, R, kind) / (eps * eps - m * m);
}

// MSE proxy v_bar / J + mu_tilde^2.
inline double mse_proxy(const StructuralConstants& c, const MlmcPlan& plan) {
    const double m = mu_tilde(c, plan.K, plan.R, plan.kind);
    return v_bar(c, plan.q, plan.K, plan.R, plan.kind) / plan.J + m * m;
}

struct ProxyEvaluation {
    double mu_tilde = 0.0;
    double v_bar = 0.0;
    double kappa_tau = 0.0;
    double phi_bar_star = 0.0;
    double objective = std::numeric_limits<double>::infinity();
};

inline double plan_objective(const StructuralConstants& c, double K, int R, double eps, EstimatorKind kind) {
    const double m = mu_tilde(c, K, R, kind);
    if (!(std::fabs(m) < eps)) return std::numeric_limits<double>::infinity();
    return phi_bar_star(c, K, R, kind) / (eps * eps - m * m);
}

inline ProxyEvaluation evaluate_proxies(const StructuralConstants& c, double K, int R, double eps, EstimatorKind kind) {
    const auto q = optimal_q(c, K, R, kind).q;
    ProxyEvaluation p;
    p.mu_tilde = mu_tilde(c, K, R, kind);
    p.v_bar = v_bar(c, q, K, R, kind);
    p.kappa_tau = cost_per_outer(q, K, R, c.tau);
    p.phi_bar_star = phi_bar_star(c, K, R, kind);
    p.objective = plan_objective(c, K, R, eps, kind);
    return p;
}

// Inline audit of the cost-ratio identity and of MSE-proxy saturation on every emitted plan.
struct PlanAudit {
    std::atomic<std::uint64_t> plans{0};
    std::atomic<std::uint64_t> cost_ratio_failures{0};
    std::atomic<std::uint64_t> saturation_checks{0};
    std::atomic<std::uint64_t> saturation_failures{0};
    double worst_cost_ratio_err = 0.0;
    double worst_saturation_err = 0.0;
    std::mutex mu;
};

inline PlanAudit& plan_audit() {
    static PlanAudit audit;
    return audit;
}

inline void audit_plan(const StructuralConstants& c, const MlmcPlan& plan, std::optional<double> saturated_eps) {
    auto& a = plan_audit();
    ++a.plans;
    double weighted = 0.0;
    for (int r = 1; r <= plan.R; ++r) weighted += plan.q[r - 1] * std::exp2(r - 1);
    const double lhs = approx_total_cost(plan, c.tau) / approx_total_cost(plan, 0.0);
    const double rhs = 1.0 + c.tau / (std::ceil(plan.K) * weighted);
    const double e1 = std::fabs(lhs - rhs) / rhs;
    {
        std::lock_guard lock(a.mu);
        a.worst_cost_ratio_err = std::max(a.worst_cost_ratio_err, e1);
    }
    if (e1 > 1e-12) {
        ++a.cost_ratio_failures;
        throw NumericalFailure("cost-ratio identity violated on emitted plan");
    }
    if (saturated_eps) {
        ++a.saturation_checks;
        const double eps2 = *saturated_eps * *saturated_eps;
        const double e2 = std::fabs(mse_proxy(c, plan) - eps2) / eps2;
        {
            std::lock_guard lock(a.mu);
            a.worst_saturation_err = std::max(a.worst_saturation_err, e2);
        }
        if (e2 > 1e-12) {
            ++a.saturation_failures;
            throw NumericalFailure("MSE proxy does not saturate epsilon^2 on emitted plan");
        }
    }
}

inline MlmcPlan make_plan(const StructuralConstants& c, EstimatorKind kind, double J, std::vector<double> q, double K, int R) {
    MlmcPlan p;
    p.kind = kind;
    p.J = J;
    p.q = std::move(q);
    p.K = K;
    p.R = R;
    p.alpha = c.alpha;
    p.level_weights = level_weights_for(kind, R, c.alpha);
    return p;
}

// Level count R(eps) of the closed-form parameters.
inline int closed_form_levels(const StructuralConstants& c, double eps, EstimatorKind kind, double K_floor = 10.0) {
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    const double al = c.alpha;
    double R;
    if (kind == EstimatorKind::ML2R) {
        const double b = 0.5 + std::log2(std::pow(c.c_tilde_value(), 1.0 / al) / K_floor);
        const double disc = b * b + 2.0 * std::log2(std::sqrt(1.0 + 4.0 * al) / eps) / al;
        R = std::ceil(b + std::sqrt(std::max(0.0, disc)));
    } else if (kind == EstimatorKind::StandardMLMC) {
        R = std::ceil(1.0 + std::log2(std::pow(std::fabs(c.c1), 1.0 / al) / K_floor) +
                      std::log2(std::sqrt(1.0 + 2.0 * al) / eps) / al);
    } else {
        R = 1.0;
    }
    if (!std::isfinite(R)) throw NumericalFailure("level count is not finite");
    return int(std::clamp(R, 1.0, double(kMaxRichardsonDepth)));
}

// Diagnostic lower end of the level search range.
inline int r_minus(const StructuralConstants& c, double eps, EstimatorKind kind, double K_floor = 10.0) {
    return int(std::ceil(std::log10(double(closed_form_levels(c, eps, kind, K_floor)))));
}

inline MlmcPlan plan_closed_form(const StructuralConstants& c, double eps, EstimatorKind kind, double K_floor = 10.0) {
    c.validate();
    if (kind == EstimatorKind::Nested) throw ConfigError("closed-form parameters exist only for mlmc and ml2r");
    if (!(K_floor >= 1.0)) throw ConfigError("K_floor must be >= 1");
    const double al = c.alpha;
    const int R = closed_form_levels(c, eps, kind, K_floor);
    double Kplus, M;
    if (kind == EstimatorKind::ML2R) {
        Kplus = std::pow(1.0 + 2.0 * al * R, 1.0 / (2.0 * al * R)) * std::pow(eps, -1.0 / (al * R)) *
                std::pow(c.c_tilde_value(), 1.0 / al) * std::exp2(-(R - 1) / 2.0);
        M = 1.0 + 1.0 / (2.0 * al * R);
    } else {
        Kplus = std::pow(1.0 + 2.0 * al, 1.0 / (2.0 * al)) * std::pow(eps, -1.0 / al) *
                std::pow(std::fabs(c.c1), 1.0 / al) * std::exp2(-(R - 1));
        M = 1.0 + 1.0 / (2.0 * al);
    }
    const double K = K_floor * std::ceil(Kplus / K_floor);
    StructuralConstants c0 = c;
    c0.tau = 0.0;
    auto q = optimal_q(c0, K, R, kind).q;
    const double J = M * v_bar(c, q, K, R, kind) / (eps * eps);
    auto plan = make_plan(c, kind, J, std::move(q), K, R);
    audit_plan(c, plan, std::nullopt);
    return plan;
}

// Smallest integer K from the explicit constraint for level count R.
inline double feasibility_floor(const StructuralConstants& c, double eps, int R, EstimatorKind kind) {
    const double al = c.alpha;
    if (kind == EstimatorKind::ML2R) {
        const double ctR = std::pow(std::fabs(c.c_R(R)), 1.0 / R);
        return std::floor(std::pow(ctR, 1.0 / al) / (std::pow(eps, 1.0 / (al * R)) * std::exp2((R - 1) / 2.0))) + 1.0;
    }
    return std::floor(std::pow(std::fabs(c.c1), 1.0 / al) / (std::pow(eps, 1.0 / al) * std::exp2(R - 1))) + 1.0;
}

struct OptimizerOptions {
    double K_floor = 10.0;     // only used to size the level range R(eps)
    int max_R = 0;             // 0: use R(eps); otherwise forces the range 1..max_R
    int patience = 16;         // consecutive strict increases that end the K scan
    double K_cap = 1e8;
};

struct KSearch {
    double K = 0.0;
    double objective = std::numeric_limits<double>::infinity();
};

inline KSearch best_K_for_R(const StructuralConstants& c, double eps, int R, EstimatorKind kind, const OptimizerOptions& opt = {}) {
    double K = std::max(1.0, feasibility_floor(c, eps, R, kind));
    while (!(std::fabs(mu_tilde(c, K, R, kind)) < eps)) {
        K += 1.0;
        if (K > opt.K_cap) return {};
    }
    KSearch best{K, plan_objective(c, K, R, eps, kind)};
    double prev = best.objective;
    int rising = 0;
    while (rising < opt.patience && K < opt.K_cap) {
        K += 1.0;
        const double v = plan_objective(c, K, R, eps, kind);
        if (v < best.objective) best = {K, v};
        rising = v > prev ? rising + 1 : 0;
        prev = v;
    }
    return best;
}

inline MlmcPlan plan_optimized(const StructuralConstants& c, double eps, EstimatorKind kind, const OptimizerOptions& opt = {}) {
    c.validate();
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    int Rmax = opt.max_R > 0 ? opt.max_R : closed_form_levels(c, eps, kind == EstimatorKind::Nested ? EstimatorKind::ML2R : kind, opt.K_floor);
    if (kind == EstimatorKind::Nested) Rmax = 1;
    Rmax = std::min(Rmax, kMaxRichardsonDepth);
    int bestR = 0;
    KSearch best;
    for (int R = 1; R <= Rmax; ++R) {
        const auto s = best_K_for_R(c, eps, R, kind, opt);
        if (s.objective < best.objective) {
            best = s;
            bestR = R;
        }
    }
    if (bestR == 0) throw InfeasiblePlan("no feasible (K, R) below the K cap for epsilon = " + std::to_string(eps));
    auto q = optimal_q(c, best.K, bestR, kind).q;
    const double J = optimal_J(c, q, best.K, bestR, eps, kind);
    auto plan = make_plan(c, kind, J, std::move(q), best.K, bestR);
    audit_plan(c, plan, eps);
    return plan;
}

// Nested estimator parameters: the numerical optimizer restricted to one level.
inline MlmcPlan plan_nested(const StructuralConstants& c, double eps) { return plan_optimized(c, eps, EstimatorKind::Nested); }

struct CardanoK {
    double K_real = 0.0;
    double K_int = 0.0;
};

// Stationary point of sigma^2 (tau + K) / (eps^2 - c1^2/K^2), i.e. the positive root of
// eps^2 x^3 - 3 c1^2 x - 2 tau c1^2 = 0, and the better neighbouring feasible integer.
inline CardanoK nested_K_cardano(const StructuralConstants& c, double eps) {
    if (c.alpha != 1.0) throw ConfigError("closed-form nested K requires alpha = 1");
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    const double a = std::fabs(c.c1) / eps;  // |c1|/eps
    const double tau = c.tau;
    double K;
    if (tau == 0.0) {
        K = std::sqrt(3.0) * a;
    } else if (tau < a) {
        K = a * 2.0 * std::cos(std::acos(tau / a) / 3.0);
    } else if (tau == a) {
        K = 2.0 * a;
    } else {
        const double s = std::sqrt(tau * tau - a * a);
        // tau - s written without cancellation
        K = std::cbrt(a * a) * (std::cbrt(tau + s) + std::cbrt(a * a / (tau + s)));
    }
    const double lo = std::max(1.0, feasibility_floor(c, eps, 1, EstimatorKind::Nested));
    const double k1 = std::max(lo, std::floor(K));
    const double k2 = std::max(lo, std::ceil(K));
    const double o1 = plan_objective(c, k1, 1, eps, EstimatorKind::Nested);
    const double o2 = plan_objective(c, k2, 1, eps, EstimatorKind::Nested);
    return {K, o2 < o1 ? k2 : k1};
}

// Smallest-cost epsilon whose plan fits the budget: geometric bisection on [1e-8, 1].
inline double invert_budget(const std::function<MlmcPlan(double)>& planner, double tau, double budget,
                            int iterations = 60) {
    if (!(budget > 0.0)) throw ConfigError("budget must be positive");
    auto cost = [&](double e) { return approx_total_cost(planner(e), tau); };
    double lo = 1e-8, hi = 1.0;
    if (cost(hi) > budget)
        throw InfeasiblePlan("budget " + std::to_string(budget) + " is below the cost of any plan (tau = " + std::to_string(tau) + ")");
    for (int i = 0; i < iterations; ++i) {
        const double mid = std::sqrt(lo * hi);
        if (cost(mid) > budget) lo = mid;
        else hi = mid;
    }
    return hi;
}

} // namespace rmlmc
