// Loss probability of a toy nested problem with all three estimators.
#include <cmath>
#include <cstdio>

#include <rmlmc/rmlmc.hpp>

using namespace rmlmc;

int main() {
    // X ~ N(0,1), F(x,U) = x + U with U ~ N(0,1): E[F|X] = X, so P(E[F|X] <= 1) = Phi(1).
    FunctionProblem<double> problem([](NormalStream& s) { return s.normal(); },
                                    [](const double& x, NormalStream& s) { return x + s.normal(); });
    const auto f = PayoffTransform::indicator(1.0);

    StructuralConstants c;
    c.c1 = 0.12;  // E[Y_K] - P(X <= 1) ~ c1 / K for this problem
    c.V1 = 0.3;
    c.sigma1_sq = norm_cdf(1.0) * (1.0 - norm_cdf(1.0));
    const double eps = 2e-3;

    const MlmcPlan plans[] = {plan_nested(c, eps), plan_optimized(c, eps, EstimatorKind::StandardMLMC),
                              plan_optimized(c, eps, EstimatorKind::ML2R)};
    std::printf("target %.6f\n", norm_cdf(1.0));
    for (const auto& p : plans) {
        const auto r = estimate(problem, f, p, 42);
        std::printf("%-6s R=%d K=%g J=%.0f  estimate %.6f  cost %.3g\n", std::string(to_string(p.kind)).c_str(), p.R, p.K,
                    p.J, r.estimate, r.consumed_cost);
    }
}
