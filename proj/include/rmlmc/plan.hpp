#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "ml2r_weights.hpp"

namespace rmlmc {

enum class EstimatorKind { Nested, StandardMLMC, ML2R };

inline std::string_view to_string(EstimatorKind k) {
    switch (k) {
    case EstimatorKind::Nested: return "nested";
    case EstimatorKind::StandardMLMC: return "mlmc";
    default: return "ml2r";
    }
}

inline EstimatorKind estimator_kind_from_string(std::string_view s) {
    if (s == "nested") return EstimatorKind::Nested;
    if (s == "mlmc") return EstimatorKind::StandardMLMC;
    if (s == "ml2r") return EstimatorKind::ML2R;
    throw ConfigError("unknown estimator kind '" + std::string(s) + "'");
}

// Level weights A_r for the given kind.
inline std::vector<double> level_weights_for(EstimatorKind kind, int R, double alpha) {
    if (kind == EstimatorKind::ML2R) return ml2r_level_weights(R, alpha);
    return std::vector<double>(R, 1.0);
}

// Largest J * q_r we accept: beyond 2^53 the ceiling is no longer exact.
inline constexpr double kMaxOuterPerLevel = 9007199254740992.0;
// Inner indices are 32-bit stream slots; one slot is reserved for the outer draw.
inline constexpr double kMaxInnerPerLevel = 4294967295.0;

struct MlmcPlan {
    EstimatorKind kind = EstimatorKind::Nested;
    double J = 1.0;
    std::vector<double> q{1.0};
    double K = 1.0;
    int R = 1;
    std::vector<double> level_weights{1.0};
    // weak-error order the ML2R weights were built for
    double alpha = 1.0;

    // 1-based level index, as in the formulas.
    std::uint64_t J_r(int r) const {
        const double v = std::ceil(J * q.at(r - 1));
        if (!(v <= kMaxOuterPerLevel)) throw NumericalFailure("outer sample count overflows at level " + std::to_string(r));
        return std::uint64_t(v);
    }
    std::uint64_t K_r(int r) const {
        const double v = std::ceil(K) * std::exp2(r - 1);
        if (!(v <= kMaxInnerPerLevel)) throw NumericalFailure("inner sample count overflows at level " + std::to_string(r));
        return std::uint64_t(v);
    }
    double A(int r) const { return level_weights.at(r - 1); }
};

// Sum_r ceil(J q_r) (tau + ceil(K) 2^(r-1)).
inline double exact_cost(const MlmcPlan& plan, double tau) {
    double c = 0.0;
    for (int r = 1; r <= plan.R; ++r) c += double(plan.J_r(r)) * (tau + double(plan.K_r(r)));
    return c;
}

inline void validate_plan(const MlmcPlan& plan) {
    const double alpha = plan.alpha;
    if (plan.R < 1 || plan.R > kMaxRichardsonDepth) throw ConfigError("plan.R must lie in [1, 30]");
    if (plan.q.size() != std::size_t(plan.R)) throw ConfigError("plan.q must have R entries");
    if (plan.level_weights.size() != std::size_t(plan.R)) throw ConfigError("plan.level_weights must have R entries");
    if (!(plan.J > 0.0) || !std::isfinite(plan.J)) throw ConfigError("plan.J must be positive and finite");
    if (!(plan.K >= 1.0) || !std::isfinite(plan.K)) throw ConfigError("plan.K must be >= 1");
    double s = 0.0;
    for (double v : plan.q) {
        if (!(v > 0.0)) throw ConfigError("plan.q entries must be positive");
        s += v;
    }
    if (std::fabs(s - 1.0) > 1e-12) throw ConfigError("plan.q must sum to 1");
    if (plan.level_weights[0] != 1.0) throw ConfigError("plan.level_weights[0] must be 1");
    switch (plan.kind) {
    case EstimatorKind::Nested:
        if (plan.R != 1) throw ConfigError("nested plan requires R = 1");
        break;
    case EstimatorKind::StandardMLMC:
        for (double a : plan.level_weights)
            if (a != 1.0) throw ConfigError("mlmc plan requires unit level weights");
        break;
    case EstimatorKind::ML2R: {
        const auto W = ml2r_level_weights(plan.R, alpha);
        for (int r = 0; r < plan.R; ++r)
            if (std::fabs(W[r] - plan.level_weights[r]) > 1e-12 * std::max(1.0, std::fabs(W[r])))
                throw ConfigError("ml2r plan level weights do not match alpha");
        break;
    }
    }
    for (int r = 1; r <= plan.R; ++r) {
        plan.J_r(r);
        plan.K_r(r);
    }
}

} // namespace rmlmc
