#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "plan.hpp"
#include "problem.hpp"
#include "random.hpp"

namespace rmlmc {

// Inner draw k of outer sample `outer` at `level` reads stream (seed, level, outer, k).
struct InnerStreams {
    std::uint64_t seed = 0;
    std::uint32_t level = 1;
    std::uint64_t outer = 0;

    NormalStream at(std::uint64_t k) const { return NormalStream({seed, level, outer, std::uint32_t(k)}); }
    NormalStream outer_stream() const { return NormalStream({seed, level, outer, kOuterSlot}); }
};

template <NestedProblem P>
double sample_inner_sum(const P& problem, const typename P::outer_type& x, std::uint64_t first, std::uint64_t count,
                        const InnerStreams& streams) {
    double s = 0.0;
    for (std::uint64_t k = first; k < first + count; ++k) {
        auto rng = streams.at(k);
        const double v = problem.sample_inner(x, rng);
        if (!std::isfinite(v))
            throw NumericalFailure("non-finite inner sample at level " + std::to_string(streams.level) + ", outer " +
                                   std::to_string(streams.outer) + ", inner " + std::to_string(k));
        s += v;
    }
    return s;
}

template <NestedProblem P>
double sample_inner_mean(const P& problem, const typename P::outer_type& x, std::uint64_t K,
                         const InnerStreams& streams) {
    if (K < 1) throw std::invalid_argument("sample_inner_mean: K must be >= 1");
    return sample_inner_sum(problem, x, 0, K, streams) / double(K);
}

struct StandardLevelSample {
    double fine;
    double coarse;
    double value() const { return fine - coarse; }
};

struct AntitheticLevelSample {
    double fine;
    double coarse1;
    double coarse2;
    double value() const { return fine - 0.5 * (coarse1 + coarse2); }
};

// Inner means behind one antithetic level sample: all 2N draws, first N, last N.
struct LevelMeans {
    double fine;
    double coarse1;
    double coarse2;
};

template <NestedProblem P>
LevelMeans sample_level_means(const P& problem, const typename P::outer_type& x, std::uint64_t K2,
                              const InnerStreams& streams) {
    if (K2 < 2 || K2 % 2 != 0) throw std::invalid_argument("level inner size must be even and positive");
    const std::uint64_t N = K2 / 2;
    const double s1 = sample_inner_sum(problem, x, 0, N, streams);
    const double s2 = sample_inner_sum(problem, x, N, N, streams);
    return {(s1 + s2) / double(K2), s1 / double(N), s2 / double(N)};
}

template <NestedProblem P>
StandardLevelSample sample_level_standard(const P& problem, const typename P::outer_type& x, std::uint64_t K2,
                                          const PayoffTransform& f, const InnerStreams& streams) {
    const auto m = sample_level_means(problem, x, K2, streams);
    return {f(m.fine), f(m.coarse1)};
}

template <NestedProblem P>
AntitheticLevelSample sample_level_antithetic(const P& problem, const typename P::outer_type& x, std::uint64_t K2,
                                              const PayoffTransform& f, const InnerStreams& streams) {
    const auto m = sample_level_means(problem, x, K2, streams);
    return {f(m.fine), f(m.coarse1), f(m.coarse2)};
}

struct LevelStats {
    int level = 1;
    std::uint64_t n_outer = 0;
    double mean = 0.0;
    double second_moment = 0.0;
    // Sorted inner means, kept only when the CDF is re-evaluated afterwards.
    std::vector<double> fine_values;
    std::vector<double> coarse1_values;
    std::vector<double> coarse2_values;

    double variance() const { return std::max(0.0, second_moment - mean * mean); }
};

struct EstimateResult {
    double estimate = 0.0;
    std::vector<LevelStats> per_level;
    double consumed_cost = 0.0;
    std::uint64_t seed = 0;
};

struct EstimateOptions {
    unsigned threads = 1;
    // copy the sorted inner means into LevelStats (estimate_cdf_and_quantile only)
    bool keep_sorted_samples = false;
};

// Raw inner means of every outer sample of every level. Level 1 fills only `fine`.
struct LevelSamples {
    int level = 1;
    std::vector<double> fine;
    std::vector<double> coarse1;
    std::vector<double> coarse2;
};

inline constexpr std::uint64_t kOuterChunk = 512;

template <NestedProblem P>
std::vector<LevelSamples> simulate_levels(const P& problem, const MlmcPlan& plan, std::uint64_t seed,
                                          const EstimateOptions& opt = {}) {
    validate_plan(plan);
    std::vector<LevelSamples> out(plan.R);
    for (int r = 1; r <= plan.R; ++r) {
        const std::uint64_t Jr = plan.J_r(r);
        const std::uint64_t Kr = plan.K_r(r);
        if (Jr - 1 > kMaxOuterIndex) throw NumericalFailure("outer sample count exceeds stream index range");
        auto& L = out[r - 1];
        L.level = r;
        L.fine.resize(Jr);
        if (r > 1) {
            L.coarse1.resize(Jr);
            L.coarse2.resize(Jr);
        }
        const std::uint64_t chunks = (Jr + kOuterChunk - 1) / kOuterChunk;
        parallel_for(chunks, opt.threads, [&](std::size_t c) {
            const std::uint64_t lo = c * kOuterChunk, hi = std::min(Jr, lo + kOuterChunk);
            for (std::uint64_t j = lo; j < hi; ++j) {
                InnerStreams st{seed, std::uint32_t(r), j};
                auto os = st.outer_stream();
                const auto x = problem.sample_outer(os);
                if (r == 1) {
                    L.fine[j] = sample_inner_mean(problem, x, Kr, st);
                } else {
                    const auto m = sample_level_means(problem, x, Kr, st);
                    L.fine[j] = m.fine;
                    L.coarse1[j] = m.coarse1;
                    L.coarse2[j] = m.coarse2;
                }
            }
        });
    }
    return out;
}

namespace detail {

inline LevelStats level_stats(const LevelSamples& L, const PayoffTransform& f) {
    LevelStats st;
    st.level = L.level;
    st.n_outer = L.fine.size();
    double s = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < L.fine.size(); ++j) {
        const double v = L.level == 1 ? f(L.fine[j]) : f(L.fine[j]) - 0.5 * (f(L.coarse1[j]) + f(L.coarse2[j]));
        if (!std::isfinite(v))
            throw NumericalFailure("non-finite level value at level " + std::to_string(L.level) + ", outer " +
                                   std::to_string(j));
        s += v;
        s2 += v * v;
    }
    st.mean = s / double(st.n_outer);
    st.second_moment = s2 / double(st.n_outer);
    return st;
}

inline EstimateResult combine(const MlmcPlan& plan, std::vector<LevelStats> stats, double tau, std::uint64_t seed) {
    EstimateResult res;
    res.seed = seed;
    res.estimate = stats[0].mean;
    for (int r = 2; r <= plan.R; ++r) res.estimate += plan.A(r) * stats[r - 1].mean;
    res.per_level = std::move(stats);
    res.consumed_cost = exact_cost(plan, tau);
    return res;
}

} // namespace detail

// (1/J_1) sum Y_{K_1} + sum_{r>=2} (A_r/J_r) sum (antithetic level differences).
template <NestedProblem P>
EstimateResult estimate(const P& problem, const PayoffTransform& f, const MlmcPlan& plan, std::uint64_t seed,
                        const EstimateOptions& opt = {}) {
    const auto samples = simulate_levels(problem, plan, seed, opt);
    std::vector<LevelStats> stats;
    stats.reserve(samples.size());
    for (const auto& L : samples) stats.push_back(detail::level_stats(L, f));
    return detail::combine(plan, std::move(stats), problem.tau(), seed);
}

// Weighted empirical MLMC distribution function built from sorted inner means.
class MultilevelCdf {
public:
    MultilevelCdf() = default;

    MultilevelCdf(const MlmcPlan& plan, std::vector<LevelSamples> samples) : weights_(plan.level_weights) {
        for (auto& L : samples) {
            std::sort(L.fine.begin(), L.fine.end());
            std::sort(L.coarse1.begin(), L.coarse1.end());
            std::sort(L.coarse2.begin(), L.coarse2.end());
        }
        levels_ = std::move(samples);
    }

    const std::vector<LevelSamples>& levels() const { return levels_; }

    double level1(double v) const { return double(count_le(levels_[0].fine, v)) / double(levels_[0].fine.size()); }

    double evaluate(double v) const { return from_counts([&](const std::vector<double>& a) { return count_le(a, v); }); }

    double min_value() const { return extreme(true); }
    double max_value() const { return extreme(false); }

    enum class Status { Ok, MultipleCrossings, AlreadyAbove, NeverReached };

    struct Quantile {
        double value;
        Status status;
        std::size_t crossings;
    };

    // Smallest stored jump point v with evaluate(v) >= p. Jump points are swept in
    // increasing order, so the answer is exact and crossings of level p are counted.
    Quantile quantile(double p) const {
        std::vector<const std::vector<double>*> arrays;
        for (const auto& L : levels_) {
            arrays.push_back(&L.fine);
            if (L.level > 1) {
                arrays.push_back(&L.coarse1);
                arrays.push_back(&L.coarse2);
            }
        }
        std::vector<std::size_t> head(arrays.size(), 0);
        bool found = false, below = true, first = true, first_above = false;
        double answer = 0.0;
        std::size_t crossings = 0;
        for (;;) {
            double v = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < arrays.size(); ++i)
                if (head[i] < arrays[i]->size()) v = std::min(v, (*arrays[i])[head[i]]);
            if (v == std::numeric_limits<double>::infinity()) break;
            for (std::size_t i = 0; i < arrays.size(); ++i)
                while (head[i] < arrays[i]->size() && (*arrays[i])[head[i]] == v) ++head[i];
            std::size_t idx = 0;
            const double F = from_counts([&](const std::vector<double>&) { return head[idx++]; });
            if (below && F >= p) {
                ++crossings;
                if (!found) {
                    found = true;
                    answer = v;
                    first_above = first;
                }
                below = false;
            } else if (!below && F < p) {
                below = true;
            }
            first = false;
        }
        if (!found) return {max_value(), Status::NeverReached, 0};
        if (first_above) return {answer, Status::AlreadyAbove, crossings};
        return {answer, crossings > 1 ? Status::MultipleCrossings : Status::Ok, crossings};
    }

private:
    static std::size_t count_le(const std::vector<double>& a, double v) {
        return std::size_t(std::upper_bound(a.begin(), a.end(), v) - a.begin());
    }

    // Counts are requested in the order fine, coarse1, coarse2 for each level.
    template <class Count>
    double from_counts(Count&& count) const {
        const auto& L1 = levels_[0];
        double F = double(count(L1.fine)) / double(L1.fine.size());
        for (std::size_t r = 1; r < levels_.size(); ++r) {
            const auto& L = levels_[r];
            const double n = double(L.fine.size());
            const double cf = double(count(L.fine));
            const double c1 = double(count(L.coarse1));
            const double c2 = double(count(L.coarse2));
            F += weights_[r] * (cf - 0.5 * (c1 + c2)) / n;
        }
        return F;
    }

    double extreme(bool lo) const {
        double v = lo ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        for (const auto& L : levels_)
            for (const auto* a : {&L.fine, &L.coarse1, &L.coarse2})
                if (!a->empty()) v = lo ? std::min(v, a->front()) : std::max(v, a->back());
        return v;
    }

    std::vector<double> weights_;
    std::vector<LevelSamples> levels_;
};

struct CdfQuantileEstimate {
    double cdf_at_u = 0.0;
    double quantile_at_p = 0.0;
    MultilevelCdf::Status status = MultilevelCdf::Status::Ok;
    std::size_t crossings = 0;
    EstimateResult result;
};

inline std::string_view to_string(MultilevelCdf::Status s) {
    switch (s) {
    case MultilevelCdf::Status::Ok: return "ok";
    case MultilevelCdf::Status::MultipleCrossings: return "multiple_crossings";
    case MultilevelCdf::Status::AlreadyAbove: return "no_sign_change_above";
    default: return "no_sign_change_below";
    }
}

// Draws every level once; the CDF at u and the p-quantile come from the same samples.
template <NestedProblem P>
CdfQuantileEstimate estimate_cdf_and_quantile(const P& problem, const MlmcPlan& plan, double u, double p,
                                              std::uint64_t seed, const EstimateOptions& opt = {},
                                              MultilevelCdf* keep = nullptr) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("estimate_cdf_and_quantile: p must lie in (0, 1)");
    auto samples = simulate_levels(problem, plan, seed, opt);
    const auto f = PayoffTransform::indicator(u);
    std::vector<LevelStats> stats;
    for (const auto& L : samples) stats.push_back(detail::level_stats(L, f));
    MultilevelCdf cdf(plan, std::move(samples));
    for (std::size_t r = 0; opt.keep_sorted_samples && r < stats.size(); ++r) {
        stats[r].fine_values = cdf.levels()[r].fine;
        stats[r].coarse1_values = cdf.levels()[r].coarse1;
        stats[r].coarse2_values = cdf.levels()[r].coarse2;
    }
    CdfQuantileEstimate out;
    out.result = detail::combine(plan, std::move(stats), problem.tau(), seed);
    out.cdf_at_u = cdf.evaluate(u);
    const auto q = cdf.quantile(p);
    out.quantile_at_p = q.value;
    out.status = q.status;
    out.crossings = q.crossings;
    if (keep) *keep = std::move(cdf);
    return out;
}

} // namespace rmlmc
