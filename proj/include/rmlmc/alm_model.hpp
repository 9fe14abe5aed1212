#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "normal.hpp"
#include "random.hpp"

namespace rmlmc {

struct MarketParams {
    double r = 0.05;
    double sigma = 0.15;
    double mu = 0.08;
    double s0 = 100.0;

    void validate() const {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("market.sigma must be positive");
        if (!(s0 > 0.0) || !std::isfinite(s0)) throw ConfigError("market.s0 must be positive");
        if (!std::isfinite(r)) throw ConfigError("market.r must be finite");
        if (!std::isfinite(mu)) throw ConfigError("market.mu must be finite");
    }
};

struct ContractParams {
    int T = 10;
    double r_g = 0.0;
    double gamma = 0.85;
    double p = 0.02;
    double MR0 = 1000.0;

    void validate() const {
        if (T < 2) throw ConfigError("contract.T must be >= 2");
        if (!std::isfinite(r_g)) throw ConfigError("contract.r_g must be finite");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("contract.gamma must lie in [0, 1]");
        if (!(p >= 0.0 && p < 1.0)) throw ConfigError("contract.p must lie in [0, 1)");
        if (!(MR0 > 0.0) || !std::isfinite(MR0)) throw ConfigError("contract.MR0 must be positive");
    }
};

// Expected yearly reserve growth factor E_Q[1 + max(r_g, gamma * log-return)].
inline double compute_z(const MarketParams& m, const ContractParams& c) {
    if (c.gamma == 0.0) return 1.0 + c.r_g;
    const double d = (m.r - 0.5 * m.sigma * m.sigma - c.r_g / c.gamma) / m.sigma;
    return 1.0 + c.r_g + c.gamma * m.sigma * (norm_pdf(d) + d * norm_cdf(d));
}

struct ContractState {
    double phi;  // shares held
    double MR;   // mathematical reserve
    double S;    // index level
};

// Outer realization: index level after one year plus the contract state it implies.
struct AlmOuter {
    double S1;
    double phi1;
    double MR1;
};

class AlmModel {
public:
    using outer_type = AlmOuter;

    AlmModel(const MarketParams& market, const ContractParams& contract, double tau = 0.0)
        : m_(market), c_(contract), tau_(tau) {
        m_.validate();
        c_.validate();
        if (!(tau >= 0.0)) throw ConfigError("tau must be >= 0");
        z_ = compute_z(m_, c_);
        const int T = c_.T;
        factor_.assign(T + 1, 0.0);
        for (int t = 0; t <= T; ++t) {
            double f = 0.0;
            for (int i = t + 1; i <= T; ++i)
                f += exit_rate(i) * std::exp(-m_.r * (i - t)) * std::pow(z_, i - t) * std::pow(1.0 - c_.p, i - t - 1);
            factor_[t] = f;
        }
        psi0_ = own_funds(0, initial_state());
        drift_ = m_.r - 0.5 * m_.sigma * m_.sigma;
        disc_ = std::exp(-m_.r * (T - 1));
    }

    const MarketParams& market() const { return m_; }
    const ContractParams& contract() const { return c_; }
    double tau() const { return tau_; }
    double z() const { return z_; }

    double exit_rate(int u) const { return u < c_.T ? c_.p : 1.0; }
    double rho(double log_return) const { return std::max(c_.r_g, c_.gamma * log_return); }

    ContractState initial_state() const { return {c_.MR0 / m_.s0, c_.MR0, m_.s0}; }

    // Year t update given the log-return over (t-1, t].
    ContractState step(const ContractState& s, double log_return, int t) const {
        const double S = s.S * std::exp(log_return);
        const double MRt = s.MR * (1.0 + rho(log_return));
        const double d = exit_rate(t);
        return {s.phi - MRt * d / S, MRt * (1.0 - d), S};
    }

    // Discounted factor multiplying MR_t in the own-funds formula; zero at t = T.
    double liability_factor(int t) const { return factor_.at(t); }

    double own_funds(int t, const ContractState& s) const { return s.phi * s.S - s.MR * liability_factor(t); }

    double psi0() const { return psi0_; }

    AlmOuter outer_at(double x) const {
        if (!(x > 0.0)) throw std::domain_error("index level must be positive");
        const auto s = step(initial_state(), std::log(x / m_.s0), 1);
        return {x, s.phi, s.MR};
    }

    // One-year own-funds loss as a function of S_1.
    double psi_loss(double x) const {
        const auto o = outer_at(x);
        return psi0_ - own_funds(1, {o.phi1, o.MR1, o.S1});
    }

    double x1() const { return m_.s0 * std::exp(c_.gamma > 0.0 ? c_.r_g / c_.gamma : 0.0); }

    double x2() const {
        const double p = c_.p;
        return m_.s0 * c_.gamma * ((1.0 - p) * liability_factor(1) + p);
    }

    // psi is non-increasing when this holds, which makes the quantile closed-form.
    bool monotone_certificate() const { return x1() >= x2(); }

    double scr_reference(double alpha) const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("scr_reference: alpha must lie in (0, 1)");
        if (!monotone_certificate())
            throw std::domain_error("monotonicity certificate x1 >= x2 fails; use a brute-force quantile of psi(S_1)");
        const double x = m_.s0 * std::exp(m_.mu - 0.5 * m_.sigma * m_.sigma + m_.sigma * norm_inv(alpha));
        return psi_loss(x);
    }

    // S_1 under the real-world measure.
    AlmOuter sample_outer(NormalStream& rng) const {
        const double x = m_.s0 * std::exp(m_.mu - 0.5 * m_.sigma * m_.sigma + m_.sigma * rng.normal());
        return outer_at(x);
    }

    // psi0 - e^{-r(T-1)} phi_T S_T along T-1 risk-neutral years started from the outer state.
    double sample_inner(const AlmOuter& x, NormalStream& rng) const {
        double S = x.S1, phi = x.phi1, MR = x.MR1;
        const int T = c_.T;
        for (int t = 2; t <= T; ++t) {
            const double lr = drift_ + m_.sigma * rng.normal();
            S *= std::exp(lr);
            const double MRt = MR * (1.0 + std::max(c_.r_g, c_.gamma * lr));
            const double d = t < T ? c_.p : 1.0;
            phi -= MRt * d / S;
            MR = MRt * (1.0 - d);
        }
        return psi0_ - disc_ * phi * S;
    }

    double exact_conditional(const AlmOuter& x) const { return psi0_ - own_funds(1, {x.phi1, x.MR1, x.S1}); }

    // Reserve after t years as a closed product over the path (s0, S_1, ..., S_t).
    double reserve_closed_form(const std::vector<double>& path) const {
        double v = c_.MR0;
        for (std::size_t u = 1; u < path.size(); ++u)
            v *= (1.0 - exit_rate(int(u))) * (1.0 + rho(std::log(path[u] / path[u - 1])));
        return v;
    }

    // Shares after t years as a closed sum over the path.
    double shares_closed_form(const std::vector<double>& path) const {
        double g = c_.MR0 / m_.s0;
        for (std::size_t i = 1; i < path.size(); ++i) {
            double prod = 1.0;
            for (std::size_t j = 1; j < i; ++j) prod *= 1.0 - exit_rate(int(j));
            for (std::size_t j = 1; j <= i; ++j) prod *= 1.0 + rho(std::log(path[j] / path[j - 1]));
            g -= c_.MR0 * exit_rate(int(i)) / path[i] * prod;
        }
        return g;
    }

private:
    MarketParams m_;
    ContractParams c_;
    double tau_;
    double z_ = 0.0;
    double psi0_ = 0.0;
    double drift_ = 0.0;
    double disc_ = 1.0;
    std::vector<double> factor_;
};

inline AlmModel make_nested_problem(const MarketParams& m, const ContractParams& c, double tau = 0.0) {
    return AlmModel(m, c, tau);
}

} // namespace rmlmc
