#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace rmlmc {

// Beyond this the products below lose all relative accuracy for alpha near 1.
inline constexpr int kMaxRichardsonDepth = 30;

// Richardson-Romberg weights w_1..w_R for refiners n_i = 2^(i-1) and bias order alpha.
// Returned 0-based: w[i-1] is w_i.
inline std::vector<double> richardson_weights(int R, double alpha) {
    if (R < 1 || R > kMaxRichardsonDepth) throw ConfigError("R must lie in [1, 30]");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    std::vector<double> w(R);
    for (int i = 1; i <= R; ++i) {
        double denom = 1.0;
        for (int j = 1; j <= R; ++j) {
            if (j == i) continue;
            denom *= std::fabs(1.0 - std::exp2(alpha * (j - i)));
        }
        w[i - 1] = ((R - i) % 2 == 0 ? 1.0 : -1.0) / denom;
    }
    return w;
}

// Level weights W_r = sum_{j>=r} w_j. W_1 is exactly 1.
inline std::vector<double> ml2r_level_weights(int R, double alpha) {
    auto w = richardson_weights(R, alpha);
    std::vector<double> W(R);
    double acc = 0.0;
    for (int r = R; r >= 1; --r) {
        acc += w[r - 1];
        W[r - 1] = acc;
    }
    W[0] = 1.0;
    return W;
}

// |sum_r w_r / n_r^(alpha R)|, the constant in front of the leading ML2R bias term.
inline double richardson_residual(int R, double alpha) {
    auto w = richardson_weights(R, alpha);
    double s = 0.0;
    for (int r = 1; r <= R; ++r) s += w[r - 1] * std::exp2(-alpha * R * (r - 1));
    return std::fabs(s);
}

} // namespace rmlmc
