#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include <rmlmc/alm_model.hpp>
#include <rmlmc/normal.hpp>

using namespace rmlmc;

namespace {

// E[1 + max(r_g, gamma (r - sigma^2/2 + sigma N))] by composite Gauss-Legendre on [-10, 10]
double z_quadrature(const MarketParams& m, const ContractParams& c) {
    const int panels = 10000;
    const double h = 20.0 / panels;
    double s = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double a = -10.0 + i * h;
        s += boost::math::quadrature::gauss<double, 20>::integrate(
            [&](double n) {
                return (1.0 + std::max(c.r_g, c.gamma * (m.r - 0.5 * m.sigma * m.sigma + m.sigma * n))) * norm_pdf(n);
            },
            a, a + h);
    }
    return s;
}

struct Mean {
    double s = 0, s2 = 0;
    double n = 0;
    void add(double v) {
        s += v;
        s2 += v * v;
        n += 1;
    }
    double mean() const { return s / n; }
    double se() const { return std::sqrt((s2 / n - mean() * mean()) / (n - 1)); }
};

double q_log_return(const MarketParams& m, NormalStream& rng) { return m.r - 0.5 * m.sigma * m.sigma + m.sigma * rng.normal(); }

} // namespace

TEST_CASE("growth factor z") {
    MarketParams m;
    ContractParams c;
    CHECK(std::fabs(compute_z(m, c) - z_quadrature(m, c)) <= 1e-6);
    CHECK(compute_z(m, c) == Catch::Approx(1.0690).margin(5e-5));
    CHECK(compute_z(m, c) > 1.0 + c.r_g);

    c.gamma = 1.0;
    c.r_g = -10.0;
    CHECK(std::fabs(compute_z(m, c) - z_quadrature(m, c)) <= 1e-6);
    CHECK(compute_z(m, c) == Catch::Approx(1.0 + m.r - 0.5 * m.sigma * m.sigma).epsilon(1e-12));

    c = {};
    c.r_g = 10.0;
    CHECK(compute_z(m, c) == Catch::Approx(11.0).epsilon(1e-12));

    c = {};
    c.gamma = 0.0;
    CHECK(compute_z(m, c) == 1.0 + c.r_g);
}

TEST_CASE("z matches a Monte Carlo average") {
    const MarketParams m;
    const ContractParams c;
    const AlmModel alm(m, c);
    NormalStream rng({77, 1, 0, 0});
    Mean acc;
    for (int i = 0; i < 10'000'000; ++i) acc.add(1.0 + alm.rho(q_log_return(m, rng)));
    CHECK(std::fabs(acc.mean() - alm.z()) <= 4 * acc.se());
}

TEST_CASE("reference quantile and thresholds") {
    const AlmModel alm({}, {});
    CHECK(alm.x1() == 100.0);
    CHECK(alm.x2() == Catch::Approx(97.485).margin(1e-3));
    CHECK(alm.monotone_certificate());
    CHECK(std::fabs(alm.scr_reference(0.005) - 252.76) <= 0.01);
    const auto& m = alm.market();
    CHECK(alm.scr_reference(0.5) == Catch::Approx(alm.psi_loss(m.s0 * std::exp(m.mu - 0.5 * m.sigma * m.sigma))).epsilon(1e-12));
    CHECK_THROWS_AS(alm.scr_reference(0.0), std::domain_error);
    CHECK_THROWS_AS(alm.psi_loss(0.0), std::domain_error);
}

TEST_CASE("loss is non-increasing in the index level") {
    const AlmModel alm({}, {});
    double last = alm.psi_loss(0.4);
    for (double x = 0.8; x <= 400.0; x += 0.4) {
        const double v = alm.psi_loss(x);
        CHECK(v <= last + 1e-12 * std::max(1.0, std::fabs(last)));
        last = v;
    }
    // kink at x1
    auto slope = [&](double a, double b) { return (alm.psi_loss(b) - alm.psi_loss(a)) / (b - a); };
    CHECK(std::fabs(slope(99.9, 100.0) - slope(100.0, 100.1)) > 1e-2);
}

TEST_CASE("certificate failure is reported") {
    ContractParams c;
    c.gamma = 1.0;  // x2 near 126 > x1 = 100
    const AlmModel alm({}, c);
    REQUIRE_FALSE(alm.monotone_certificate());
    CHECK_THROWS_AS(alm.scr_reference(0.005), std::domain_error);
}

TEST_CASE("own funds at maturity") {
    const AlmModel alm({}, {});
    const ContractState s{3.0, 0.0, 120.0};
    CHECK(alm.liability_factor(10) == 0.0);
    CHECK(alm.own_funds(10, s) == 360.0);
}

TEST_CASE("initial own funds match a risk-neutral simulation") {
    const MarketParams m;
    const ContractParams c;
    const AlmModel alm(m, c);
    CHECK(alm.psi0() == Catch::Approx(-166.25).margin(0.01));
    NormalStream rng({5, 1, 0, 0});
    Mean acc;
    for (int i = 0; i < 10'000'000; ++i) {
        auto s = alm.initial_state();
        for (int t = 1; t <= c.T; ++t) s = alm.step(s, q_log_return(m, rng), t);
        acc.add(std::exp(-m.r * c.T) * s.phi * s.S);
    }
    CHECK(std::fabs(acc.mean() - alm.psi0()) <= 4 * acc.se());
}

TEST_CASE("own funds are discounted conditional expectations one year ahead") {
    const MarketParams m;
    const ContractParams c;
    const AlmModel alm(m, c);
    for (int t : {0, 1}) {
        const ContractState start = t == 0 ? alm.initial_state() : [&] {
            const auto o = alm.outer_at(110.0);
            return ContractState{o.phi1, o.MR1, o.S1};
        }();
        NormalStream rng({9, 1, std::uint64_t(t), 0});
        Mean acc;
        for (int i = 0; i < 1'000'000; ++i) {
            const auto s = alm.step(start, q_log_return(m, rng), t + 1);
            acc.add(std::exp(-m.r) * alm.own_funds(t + 1, s));
        }
        CHECK(std::fabs(acc.mean() - alm.own_funds(t, start)) <= 4 * acc.se());
    }
}

TEST_CASE("reserve and share recursions match their closed forms") {
    const MarketParams m;
    const ContractParams c;
    const AlmModel alm(m, c);
    NormalStream rng({13, 1, 0, 0});
    for (int n = 0; n < 1000; ++n) {
        auto s = alm.initial_state();
        std::vector<double> path{m.s0};
        for (int t = 1; t <= c.T; ++t) {
            s = alm.step(s, 2.0 * q_log_return(m, rng), t);
            path.push_back(s.S);
            const double mr = alm.reserve_closed_form(path);
            CHECK(std::fabs(s.MR - mr) <= 1e-12 * std::max(1.0, std::fabs(mr)));
            const double g = alm.shares_closed_form(path);
            CHECK(std::fabs(s.phi - g) <= 1e-12 * std::max(std::fabs(g), c.MR0 / m.s0));
        }
    }
}

TEST_CASE("inner payoff is unbiased for the loss") {
    const AlmModel alm({}, {});
    const auto x = alm.outer_at(100.0);
    Mean acc;
    for (std::uint64_t k = 0; k < 1'000'000; ++k) {
        NormalStream rng({21, 1, 0, std::uint32_t(k)});
        acc.add(alm.sample_inner(x, rng));
    }
    CHECK(std::fabs(acc.mean() - alm.psi_loss(100.0)) <= 4 * acc.se());
    CHECK(alm.exact_conditional(x) == alm.psi_loss(100.0));
}

TEST_CASE("two-year contract has a single inner step") {
    ContractParams c;
    c.T = 2;
    const MarketParams m;
    const AlmModel alm(m, c);
    const auto x = alm.outer_at(93.0);
    NormalStream a({1, 1, 0, 0}), b({1, 1, 0, 0});
    const double v = alm.sample_inner(x, a);
    const double lr = q_log_return(m, b);
    const double S2 = x.S1 * std::exp(lr);
    const double MR2 = x.MR1 * (1.0 + alm.rho(lr));
    const double phi2 = x.phi1 - MR2 / S2;
    CHECK(v == Catch::Approx(alm.psi0() - std::exp(-m.r) * phi2 * S2).epsilon(1e-14));
    // both streams consumed exactly one normal
    CHECK(a.normal() == b.normal());
}

TEST_CASE("closed-form quantile agrees with brute force") {
    const MarketParams m;
    const AlmModel alm(m, {});
    const std::size_t n = 10'000'000;
    std::vector<double> loss(n);
    NormalStream rng({3, 1, 0, 0});
    std::size_t small = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto x = alm.sample_outer(rng);
        loss[i] = alm.psi_loss(x.S1);
        if (loss[i] <= 0.01 * alm.contract().MR0) ++small;
    }
    const double p = 0.995;
    const double half = 3.0 * std::sqrt(n * p * (1 - p));
    const auto lo = std::size_t(std::floor(n * p - half)), hi = std::size_t(std::ceil(n * p + half));
    std::nth_element(loss.begin(), loss.begin() + lo, loss.end());
    const double qlo = loss[lo];
    std::nth_element(loss.begin() + lo, loss.begin() + hi, loss.end());
    const double qhi = loss[hi];
    const double ref = alm.scr_reference(0.005);
    CHECK(qlo <= ref);
    CHECK(ref <= qhi);
    // loss distribution piles up near zero
    CHECK(double(small) / n >= 0.6);
}
