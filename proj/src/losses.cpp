#include "mtunet/losses.hpp"

#include <cmath>
#include <limits>

namespace mtunet {

std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::MTLS1: return "MTLS1";
        case Scheme::MTLS2: return "MTLS2";
        case Scheme::MTLS3: return "MTLS3";
    }
    return "?";
}

Scheme parse_scheme(std::string_view name) {
    for (Scheme s : {Scheme::MTLS1, Scheme::MTLS2, Scheme::MTLS3})
        if (to_string(s) == name) return s;
    throw ConfigError("unknown scheme '" + std::string(name) + "' (expected MTLS1, MTLS2, MTLS3)");
}

LossBreakdown scheme_total(Scheme scheme, double saliency, double classification, double sigma_s,
                           double sigma_c, double lr) {
    LossBreakdown b;
    b.saliency = saliency;
    b.classification = classification;
    b.sigma_s = scales_saliency(scheme) ? sigma_s : 1.0;
    b.sigma_c = scales_class(scheme) ? sigma_c : 1.0;
    if (!(b.sigma_s > 0.0) || !(b.sigma_c > 0.0)) throw ConfigError("sigma values must be positive");

    b.total = 0.0;
    if (scales_saliency(scheme)) {
        b.total += saliency / (b.sigma_s * b.sigma_s) + std::log(b.sigma_s + 1.0);
        b.r_eff_s = lr / (b.sigma_s * b.sigma_s);
    } else {
        b.total += saliency;
        b.r_eff_s = lr;
    }
    if (scales_class(scheme)) {
        b.total += classification / (b.sigma_c * b.sigma_c) + std::log(b.sigma_c + 1.0);
        b.r_eff_c = lr / (b.sigma_c * b.sigma_c);
    } else {
        b.total += classification;
        b.r_eff_c = lr;
    }
    return b;
}

template <typename T>
Var<T> uncertainty_term(Var<T> loss, Var<T> sigma) {
    return add(div(loss, mul(sigma, sigma)), log(add_scalar(sigma, T{1})));
}

template <typename T>
Var<T> scheme_total_graph(Scheme scheme, Var<T> saliency, Var<T> classification, Var<T> sigma_s,
                          Var<T> sigma_c) {
    const Var<T> s = scales_saliency(scheme) ? uncertainty_term(saliency, sigma_s) : saliency;
    const Var<T> c = scales_class(scheme) ? uncertainty_term(classification, sigma_c) : classification;
    return add(s, c);
}

double equilibrium_inverse(double loss) {
    if (!(loss > 0.0) || !std::isfinite(loss)) throw ConfigError("equilibrium_inverse requires a finite loss > 0");
    double lo = 0.0, hi = 1.0;
    while (equilibrium_f(hi) < loss) {
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (equilibrium_f(mid) < loss)
            lo = mid;
        else
            hi = mid;
    }
    return std::abs(equilibrium_f(lo) - loss) <= std::abs(equilibrium_f(hi) - loss) ? lo : hi;
}

std::vector<double> sigma_descent_trace(std::span<const double> losses, double sigma0, double step) {
    if (!(sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
    if (!(step > 0.0)) throw ConfigError("step must be positive");
    std::vector<double> trace;
    trace.reserve(losses.size() + 1);
    trace.push_back(sigma0);
    double sigma = sigma0;
    double prev_delta = 0.0;
    int growing_flips = 0;
    for (std::size_t t = 0; t < losses.size(); ++t) {
        if (!(losses[t] >= 0.0)) throw ConfigError("losses must be non-negative");
        const double next = std::max(sigma - step * sigma_gradient(losses[t], sigma), kSigmaFloor);
        const double delta = next - sigma;
        if (!std::isfinite(next) || next > 1e6)
            throw DivergenceError("sigma diverged at iteration " + std::to_string(t) + "; reduce the step");
        if (delta * prev_delta < 0.0 && std::abs(delta) > std::abs(prev_delta))
            ++growing_flips;
        else
            growing_flips = 0;
        if (growing_flips >= 10)
            throw DivergenceError("sigma oscillates with growing amplitude at iteration " + std::to_string(t) +
                                  "; reduce the step");
        prev_delta = delta;
        sigma = next;
        trace.push_back(sigma);
    }
    return trace;
}

template Var<float> uncertainty_term(Var<float>, Var<float>);
template Var<double> uncertainty_term(Var<double>, Var<double>);
template Var<float> scheme_total_graph(Scheme, Var<float>, Var<float>, Var<float>, Var<float>);
template Var<double> scheme_total_graph(Scheme, Var<double>, Var<double>, Var<double>, Var<double>);

}  // namespace mtunet
