#include <catch_amalgamated.hpp>

#include <cmath>
#include <thread>

#include <rmlmc/alm_model.hpp>
#include <rmlmc/calibration.hpp>

using namespace rmlmc;

namespace {

FunctionProblem<double> gaussian_toy() {
    return FunctionProblem<double>([](NormalStream& s) { return s.normal(); },
                                   [](const double& x, NormalStream& s) { return x + s.normal(); });
}

unsigned hw() { return std::max(2u, std::thread::hardware_concurrency()); }

} // namespace

TEST_CASE("first-level variance recommendation") {
    CHECK(sigma1_sq_recommendation(0.005) == Catch::Approx(0.004975).epsilon(1e-14));
    CHECK(sigma1_sq_recommendation(0.5) == 0.25);
    CHECK(sigma1_sq_recommendation(0.005, 0.025) == Catch::Approx(0.029725).epsilon(1e-14));
    CHECK_THROWS_AS(sigma1_sq_recommendation(0.0), std::domain_error);
    CHECK_THROWS_AS(sigma1_sq_recommendation(1.0), std::domain_error);
}

TEST_CASE("pilot input validation") {
    const auto prob = gaussian_toy();
    const auto f = PayoffTransform::indicator(0.0);
    CHECK_THROWS_AS(run_pilot(prob, f, {}, 1000, 1), ConfigError);
    CHECK_THROWS_AS(run_pilot(prob, f, {8, 8}, 1000, 1), ConfigError);
    CHECK_THROWS_AS(run_pilot(prob, f, {8, 16}, 999, 1), ConfigError);
}

TEST_CASE("problem without inner noise has no detectable bias") {
    const FunctionProblem<double> prob([](NormalStream& s) { return s.normal(); },
                                       [](const double& x, NormalStream&) { return x; });
    const auto rep = calibrate(prob, PayoffTransform::indicator(0.3), {4, 8, 16}, 5000, 2);
    CHECK(rep.c1.below_resolution);
    CHECK(rep.c2.below_resolution);
    CHECK(rep.flags.size() == 2);
}

TEST_CASE("pilot is reproducible across worker counts") {
    const auto prob = gaussian_toy();
    const auto f = PayoffTransform::indicator(0.4);
    const auto a = calibrate(prob, f, {2, 4, 8}, 20000, 9, 1);
    const auto b = calibrate(prob, f, {2, 4, 8}, 20000, 9, hw());
    CHECK(a.c1.value == b.c1.value);
    CHECK(a.c2.value == b.c2.value);
    CHECK(a.V1_antithetic.value == b.V1_antithetic.value);
    CHECK(a.V1_standard.value == b.V1_standard.value);
    CHECK(a.sigma1_sq == b.sigma1_sq);
}

TEST_CASE("confidence width shrinks with the square root of the pilot size") {
    const auto prob = gaussian_toy();
    const auto f = PayoffTransform::indicator(0.4);
    const auto a = estimate_c1(prob, f, {2, 4, 8}, 200000, 4, hw());
    const auto b = estimate_c1(prob, f, {2, 4, 8}, 400000, 4, hw());
    const double ratio = (b.ci_hi - b.ci_lo) / (a.ci_hi - a.ci_lo);
    CHECK(ratio >= 0.8 / std::sqrt(2.0));
    CHECK(ratio <= 1.2 / std::sqrt(2.0));
}

TEST_CASE("toy bias coefficient matches the analytic expansion") {
    // Y_K ~ N(0, 1 + 1/K): P(Y_K <= u) = Phi(u) - u phi(u) / (2K) + O(K^-2)
    const auto prob = gaussian_toy();
    const double u = 0.4;
    const auto fit = estimate_c1(prob, PayoffTransform::indicator(u), {8, 16, 32}, 1'000'000, 6, hw());
    const double c1 = -0.5 * u * norm_pdf(u);
    CHECK(fit.value == Catch::Approx(c1).epsilon(0.25));
}

TEST_CASE("ALM pilot") {
    const AlmModel alm({}, {});
    const auto f = PayoffTransform::indicator(alm.scr_reference(0.005));
    const auto rows = run_pilot(alm, f, {8, 16, 32, 64}, 1'000'000, 2024, {false, hw()});
    const auto c1 = fit_c1(rows);
    for (const auto& r : rows) {
        CAPTURE(r.K, r.level_antithetic.mean, r.level_antithetic.var, r.level_standard.var);
        if (r.K >= 16) CHECK(std::fabs(-r.level_antithetic.mean * 2.0 * r.K - c1.value) <= 0.5 * std::fabs(c1.value));
        const double se = std::hypot(r.level_antithetic.var_se, r.level_standard.var_se);
        CHECK(r.level_antithetic.var <= r.level_standard.var + 3 * se);
    }
}
