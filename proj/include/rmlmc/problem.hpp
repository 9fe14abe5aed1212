#pragma once

#include <concepts>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>

#include "random.hpp"

namespace rmlmc {

// A nested problem draws an outer state X and, given X, i.i.d. inner payoffs F(X, U).
template <class P>
concept NestedProblem = requires(const P& p, NormalStream& s, const typename P::outer_type& x) {
    typename P::outer_type;
    { p.sample_outer(s) } -> std::convertible_to<typename P::outer_type>;
    { p.sample_inner(x, s) } -> std::convertible_to<double>;
    { p.tau() } -> std::convertible_to<double>;
};

template <class P>
concept HasExactConditional = NestedProblem<P> && requires(const P& p, const typename P::outer_type& x) {
    { p.exact_conditional(x) } -> std::convertible_to<double>;
};

// Type-erased problem built from callables, for user models.
template <class X>
class FunctionProblem {
public:
    using outer_type = X;
    using OuterFn = std::function<X(NormalStream&)>;
    using InnerFn = std::function<double(const X&, NormalStream&)>;
    using ExactFn = std::function<double(const X&)>;

    FunctionProblem(OuterFn outer, InnerFn inner, double tau = 0.0, ExactFn exact = {})
        : outer_(std::move(outer)), inner_(std::move(inner)), exact_(std::move(exact)), tau_(tau) {
        if (!outer_ || !inner_) throw std::invalid_argument("FunctionProblem: samplers must be set");
        if (!(tau_ >= 0.0)) throw std::invalid_argument("FunctionProblem: tau must be >= 0");
    }

    X sample_outer(NormalStream& s) const { return outer_(s); }
    double sample_inner(const X& x, NormalStream& s) const { return inner_(x, s); }
    double tau() const { return tau_; }

    bool has_exact() const { return static_cast<bool>(exact_); }
    double exact_conditional(const X& x) const {
        if (!exact_) throw std::logic_error("FunctionProblem: no exact conditional");
        return exact_(x);
    }

private:
    OuterFn outer_;
    InnerFn inner_;
    ExactFn exact_;
    double tau_;
};

// f applied to inner means.
class PayoffTransform {
public:
    enum class Kind { Indicator, Identity, Custom };

    static PayoffTransform indicator(double threshold) { return PayoffTransform(Kind::Indicator, threshold, {}); }
    static PayoffTransform identity() { return PayoffTransform(Kind::Identity, 0.0, {}); }
    static PayoffTransform custom(std::function<double(double)> hook) {
        if (!hook) throw std::invalid_argument("PayoffTransform: empty hook");
        return PayoffTransform(Kind::Custom, 0.0, std::move(hook));
    }

    double operator()(double v) const {
        switch (kind_) {
        case Kind::Indicator: return v <= threshold_ ? 1.0 : 0.0;
        case Kind::Identity: return v;
        default: return hook_(v);
        }
    }

    Kind kind() const { return kind_; }
    double threshold() const { return threshold_; }

private:
    PayoffTransform(Kind k, double u, std::function<double(double)> h) : kind_(k), threshold_(u), hook_(std::move(h)) {}

    Kind kind_;
    double threshold_;
    std::function<double(double)> hook_;
};

} // namespace rmlmc
