#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

namespace rmlmc {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct ErrorSummary {
    double mean = 0.0;   // mean of the estimates
    double mse = 0.0;    // mean squared error around the reference
    double rmse = 0.0;
    Interval rmse_ci;
    std::size_t n = 0;
};

// RMSE with a chi-square interval on the mean squared error, M - 1 degrees of freedom.
inline ErrorSummary error_summary(const std::vector<double>& estimates, double reference, double level = 0.95) {
    const std::size_t M = estimates.size();
    if (M < 2) throw std::invalid_argument("error_summary: need at least two replications");
    ErrorSummary s;
    s.n = M;
    double se = 0.0, sum = 0.0;
    for (double e : estimates) {
        sum += e;
        se += (e - reference) * (e - reference);
    }
    s.mean = sum / double(M);
    s.mse = se / double(M);
    s.rmse = std::sqrt(s.mse);
    const double dof = double(M - 1);
    boost::math::chi_squared chi(dof);
    const double a = 1.0 - level;
    const double qhi = boost::math::quantile(chi, 1.0 - a / 2.0);
    const double qlo = boost::math::quantile(chi, a / 2.0);
    s.rmse_ci = {std::sqrt(dof * s.mse / qhi), std::sqrt(dof * s.mse / qlo)};
    return s;
}

// Ratio mse_a / mse_b with an F interval, both on (M_a - 1, M_b - 1) degrees of freedom.
inline Interval mse_ratio_ci(double mse_a, std::size_t Ma, double mse_b, std::size_t Mb, double level = 0.90) {
    boost::math::fisher_f F(double(Ma - 1), double(Mb - 1));
    const double a = 1.0 - level;
    const double ratio = mse_a / mse_b;
    return {ratio / boost::math::quantile(F, 1.0 - a / 2.0), ratio / boost::math::quantile(F, a / 2.0)};
}

// True when mse_a is significantly larger than mse_b (one-sided F test at `level`).
inline bool significantly_worse(double mse_a, std::size_t Ma, double mse_b, std::size_t Mb, double level = 0.95) {
    boost::math::fisher_f F(double(Ma - 1), double(Mb - 1));
    return mse_a / mse_b > boost::math::quantile(F, level);
}

// Spearman rank correlation, average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = double(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace rmlmc
