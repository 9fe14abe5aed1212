#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "nested_core.hpp"
#include "parallel.hpp"
#include "plan_optimizer.hpp"

namespace rmlmc {

// Raw power sums of one level quantity over the pilot.
struct MomentSums {
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;

    void add(double v) {
        const double v2 = v * v;
        s1 += v;
        s2 += v2;
        s3 += v2 * v;
        s4 += v2 * v2;
    }
    void merge(const MomentSums& o) {
        s1 += o.s1;
        s2 += o.s2;
        s3 += o.s3;
        s4 += o.s4;
    }
};

struct MomentSummary {
    double mean = 0.0;
    double mean_se = 0.0;
    double var = 0.0;
    double var_se = 0.0;
};

inline MomentSummary summarize(const MomentSums& m, double n) {
    MomentSummary s;
    const double e1 = m.s1 / n, e2 = m.s2 / n, e3 = m.s3 / n, e4 = m.s4 / n;
    s.mean = e1;
    const double var = std::max(0.0, e2 - e1 * e1);
    s.var = var * n / (n - 1.0);
    s.mean_se = std::sqrt(s.var / n);
    const double m4 = e4 - 4.0 * e1 * e3 + 6.0 * e1 * e1 * e2 - 3.0 * e1 * e1 * e1 * e1;
    s.var_se = std::sqrt(std::max(0.0, m4 - var * var) / n);
    return s;
}

// Pilot statistics at one base inner size K.
struct PilotRow {
    std::uint64_t K = 0;
    std::uint64_t n = 0;
    MomentSummary level_antithetic;  // Y_2K - (Y_K + Y'_K)/2
    MomentSummary level_standard;    // Y_2K - Y_K
    MomentSummary second_difference; // 2 Y_4K - 3 Y_2K + Y_K
    double mean_YK = 0.0;
    double cost = 0.0;
};

struct PilotOptions {
    bool second_difference = true;
    unsigned threads = 1;
};

inline constexpr std::uint32_t kPilotLevelBase = 64;

template <NestedProblem P>
std::vector<PilotRow> run_pilot(const P& problem, const PayoffTransform& f, const std::vector<std::uint64_t>& K_grid,
                                std::uint64_t n_pilot, std::uint64_t seed, const PilotOptions& opt = {}) {
    if (K_grid.empty()) throw ConfigError("calibration.K_grid must not be empty");
    for (std::size_t i = 0; i < K_grid.size(); ++i) {
        if (K_grid[i] < 1) throw ConfigError("calibration.K_grid entries must be >= 1");
        if (i > 0 && K_grid[i] <= K_grid[i - 1]) throw ConfigError("calibration.K_grid must be strictly increasing");
    }
    if (n_pilot < 1000) throw ConfigError("calibration.n_pilot must be >= 1000");
    if (K_grid.size() > 128) throw ConfigError("calibration.K_grid is too long");

    std::vector<PilotRow> rows;
    for (std::size_t g = 0; g < K_grid.size(); ++g) {
        const std::uint64_t K = K_grid[g];
        const std::uint64_t chunks = (n_pilot + kOuterChunk - 1) / kOuterChunk;
        struct Partial {
            MomentSums a, s, d2;
            double yk = 0.0;
        };
        std::vector<Partial> parts(chunks);
        const auto level = std::uint32_t(kPilotLevelBase + g);
        parallel_for(chunks, opt.threads, [&](std::size_t c) {
            Partial acc;
            const std::uint64_t lo = c * kOuterChunk, hi = std::min(n_pilot, lo + kOuterChunk);
            for (std::uint64_t j = lo; j < hi; ++j) {
                InnerStreams st{seed, level, j};
                auto os = st.outer_stream();
                const auto x = problem.sample_outer(os);
                const double sa = sample_inner_sum(problem, x, 0, K, st);
                const double sb = sample_inner_sum(problem, x, K, K, st);
                const double yk = f(sa / double(K));
                const double yk2 = f(sb / double(K));
                const double y2k = f((sa + sb) / double(2 * K));
                acc.a.add(y2k - 0.5 * (yk + yk2));
                acc.s.add(y2k - yk);
                acc.yk += yk;
                if (opt.second_difference) {
                    const double sc = sample_inner_sum(problem, x, 2 * K, 2 * K, st);
                    const double y4k = f((sa + sb + sc) / double(4 * K));
                    acc.d2.add(2.0 * y4k - 3.0 * y2k + yk);
                }
            }
            parts[c] = acc;
        });
        Partial tot;
        for (const auto& p : parts) {
            tot.a.merge(p.a);
            tot.s.merge(p.s);
            tot.d2.merge(p.d2);
            tot.yk += p.yk;
        }
        PilotRow row;
        row.K = K;
        row.n = n_pilot;
        const double n = double(n_pilot);
        row.level_antithetic = summarize(tot.a, n);
        row.level_standard = summarize(tot.s, n);
        if (opt.second_difference) row.second_difference = summarize(tot.d2, n);
        row.mean_YK = tot.yk / n;
        row.cost = n * (problem.tau() + double((opt.second_difference ? 4 : 2) * K));
        rows.push_back(row);
    }
    return rows;
}

struct ConstantFit {
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double se = 0.0;
    bool below_resolution = false;
};

namespace detail {

// Weighted least squares through the origin: y ~ theta x with weights 1/se^2.
inline ConstantFit wls_origin(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& se) {
    double sxx = 0.0, sxy = 0.0;
    bool all_small = true;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = std::max(se[i], 1e-300);
        const double w = 1.0 / (s * s);
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
        if (std::fabs(y[i]) > 2.0 * se[i]) all_small = false;
    }
    ConstantFit fit;
    fit.value = sxy / sxx;
    fit.se = 1.0 / std::sqrt(sxx);
    fit.ci_lo = fit.value - 1.96 * fit.se;
    fit.ci_hi = fit.value + 1.96 * fit.se;
    fit.below_resolution = all_small;
    return fit;
}

} // namespace detail

// E[Y_2K - Y_K] ~ -c1 / (2K)
inline ConstantFit fit_c1(const std::vector<PilotRow>& rows) {
    std::vector<double> x, y, se;
    for (const auto& r : rows) {
        x.push_back(1.0 / (2.0 * double(r.K)));
        y.push_back(-r.level_antithetic.mean);
        se.push_back(r.level_antithetic.mean_se);
    }
    return detail::wls_origin(x, y, se);
}

// E[2 Y_4K - 3 Y_2K + Y_K] ~ 6 c2 / (4K)^2
inline ConstantFit fit_c2(const std::vector<PilotRow>& rows) {
    std::vector<double> x, y, se;
    for (const auto& r : rows) {
        const double k4 = 4.0 * double(r.K);
        x.push_back(6.0 / (k4 * k4));
        y.push_back(r.second_difference.mean);
        se.push_back(r.second_difference.mean_se);
    }
    return detail::wls_origin(x, y, se);
}

struct V1Fit {
    ConstantFit fit;          // regression of Var against (2K)^-beta
    double max_rescaled = 0.0; // max_K Var * (2K)^beta
    double value = 0.0;        // larger of the two
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

// Var[level at 2K] <= V1 / (2K)^beta
inline V1Fit fit_V1(const std::vector<PilotRow>& rows, bool antithetic, double beta = 0.5) {
    std::vector<double> x, y, se;
    V1Fit out;
    double best_lo = 0.0, best_hi = 0.0;
    for (const auto& r : rows) {
        const auto& m = antithetic ? r.level_antithetic : r.level_standard;
        const double scale = std::pow(2.0 * double(r.K), beta);
        x.push_back(1.0 / scale);
        y.push_back(m.var);
        se.push_back(m.var_se);
        if (m.var * scale > out.max_rescaled) {
            out.max_rescaled = m.var * scale;
            best_lo = (m.var - 1.96 * m.var_se) * scale;
            best_hi = (m.var + 1.96 * m.var_se) * scale;
        }
    }
    out.fit = detail::wls_origin(x, y, se);
    if (out.fit.value >= out.max_rescaled) {
        out.value = out.fit.value;
        out.ci_lo = out.fit.ci_lo;
        out.ci_hi = out.fit.ci_hi;
    } else {
        out.value = out.max_rescaled;
        out.ci_lo = best_lo;
        out.ci_hi = best_hi;
    }
    return out;
}

// Bernoulli variance of the first level, optionally corrected by the first bias term.
inline double sigma1_sq_recommendation(double I_rough, std::optional<double> c1 = std::nullopt) {
    if (!(I_rough > 0.0 && I_rough < 1.0)) throw std::domain_error("sigma1_sq_recommendation: I must lie in (0, 1)");
    double v = I_rough * (1.0 - I_rough);
    if (c1) v += (1.0 - 2.0 * I_rough) * *c1;
    return v;
}

struct CalibrationReport {
    ConstantFit c1;
    ConstantFit c2;
    double a_hat = 0.0;
    double a_lo = 0.0;
    double a_hi = 0.0;
    V1Fit V1_antithetic;
    V1Fit V1_standard;
    double I_rough = 0.0;
    double sigma1_sq = 0.0;
    double pilot_cost = 0.0;
    std::vector<std::uint64_t> K_grid;
    std::uint64_t n_pilot = 0;
    std::uint64_t seed = 0;
    double beta = 0.5;
    std::vector<PilotRow> rows;
    std::vector<std::string> flags;
};

inline CalibrationReport summarize_pilot(const std::vector<PilotRow>& rows, std::uint64_t seed, bool with_c2, double beta = 0.5) {
    CalibrationReport rep;
    rep.rows = rows;
    rep.seed = seed;
    rep.beta = beta;
    for (const auto& r : rows) {
        rep.K_grid.push_back(r.K);
        rep.pilot_cost += r.cost;
        rep.n_pilot = r.n;
    }
    rep.c1 = fit_c1(rows);
    if (rep.c1.below_resolution) rep.flags.push_back("c1: bias below pilot resolution");
    if (with_c2) {
        rep.c2 = fit_c2(rows);
        if (rep.c2.below_resolution) rep.flags.push_back("c2: bias below pilot resolution");
        if (rep.c1.value != 0.0) {
            rep.a_hat = rep.c2.value / rep.c1.value;
            const double b1 = rep.c2.ci_lo / rep.c1.value, b2 = rep.c2.ci_hi / rep.c1.value;
            rep.a_lo = std::min(b1, b2);
            rep.a_hi = std::max(b1, b2);
        }
    }
    rep.V1_antithetic = fit_V1(rows, true, beta);
    rep.V1_standard = fit_V1(rows, false, beta);
    rep.I_rough = rows.front().mean_YK;
    rep.sigma1_sq = rep.I_rough > 0.0 && rep.I_rough < 1.0 ? sigma1_sq_recommendation(rep.I_rough) : 0.25;
    return rep;
}

template <NestedProblem P>
CalibrationReport calibrate(const P& problem, const PayoffTransform& f, const std::vector<std::uint64_t>& K_grid,
                            std::uint64_t n_pilot, std::uint64_t seed, unsigned threads = 1) {
    const auto rows = run_pilot(problem, f, K_grid, n_pilot, seed, {true, threads});
    return summarize_pilot(rows, seed, true);
}

template <NestedProblem P>
ConstantFit estimate_c1(const P& problem, const PayoffTransform& f, const std::vector<std::uint64_t>& K_grid,
                        std::uint64_t n_pilot, std::uint64_t seed, unsigned threads = 1) {
    return fit_c1(run_pilot(problem, f, K_grid, n_pilot, seed, {false, threads}));
}

template <NestedProblem P>
ConstantFit estimate_c2(const P& problem, const PayoffTransform& f, const std::vector<std::uint64_t>& K_grid,
                        std::uint64_t n_pilot, std::uint64_t seed, unsigned threads = 1) {
    return fit_c2(run_pilot(problem, f, K_grid, n_pilot, seed, {true, threads}));
}

template <NestedProblem P>
V1Fit estimate_V1(const P& problem, const PayoffTransform& f, const std::vector<std::uint64_t>& K_grid,
                  std::uint64_t n_pilot, bool antithetic, std::uint64_t seed, unsigned threads = 1) {
    return fit_V1(run_pilot(problem, f, K_grid, n_pilot, seed, {false, threads}), antithetic);
}

// Plan inputs from a calibration: the standard defaults for alpha, beta and a unless
// the pilot resolves a different growth factor.
inline StructuralConstants constants_from_report(const CalibrationReport& rep, StructuralConstants base = {}) {
    base.c1 = std::fabs(rep.c1.value);
    base.V1 = rep.V1_antithetic.value;
    base.sigma1_sq = rep.sigma1_sq;
    if (rep.a_hat > 1.0 && (base.growth_a < rep.a_lo || base.growth_a > rep.a_hi)) base.growth_a = rep.a_hat;
    return base;
}

} // namespace rmlmc
