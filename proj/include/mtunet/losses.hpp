#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtunet/errors.hpp"
#include "mtunet/tape.hpp"

namespace mtunet {

// MTLS1 learns both uncertainties; MTLS2 fixes sigma_c = 1; MTLS3 fixes sigma_s = 1.
enum class Scheme { MTLS1, MTLS2, MTLS3 };

std::string_view to_string(Scheme s);
Scheme parse_scheme(std::string_view name);

inline bool scales_saliency(Scheme s) { return s != Scheme::MTLS3; }
inline bool scales_class(Scheme s) { return s != Scheme::MTLS2; }

struct LossBreakdown {
    double saliency = 0.0;  // L_s
    double classification = 0.0;  // L_c
    double total = 0.0;
    double sigma_s = 1.0;
    double sigma_c = 1.0;
    double r_eff_s = 0.0;
    double r_eff_c = 0.0;
};

template <typename T>
double cross_entropy(std::span<const T> q, std::span<const T> r) {
    if (q.size() != r.size())
        throw ShapeError("cross_entropy: length mismatch " + std::to_string(q.size()) + " vs " +
                         std::to_string(r.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] == T{0}) continue;
        acc -= static_cast<double>(q[i]) * std::log(std::max(static_cast<double>(r[i]), kLogFloor));
    }
    return acc;
}

template <typename T>
double entropy(std::span<const T> q) {
    return cross_entropy(q, q);
}

// KLD written as H(truth, pred) - H(truth).
template <typename T>
double saliency_loss(std::span<const T> truth, std::span<const T> pred) {
    return cross_entropy(truth, pred) - entropy(truth);
}

template <typename T>
double classification_loss(std::span<const T> truth, std::span<const T> pred) {
    return cross_entropy(truth, pred);
}

// Throws ConfigError for non-positive sigma. `lr` only feeds the effective
// learning-rate fields.
LossBreakdown scheme_total(Scheme scheme, double saliency, double classification, double sigma_s,
                           double sigma_c, double lr = 1.0);

// Same objective recorded on a tape. Sigma vars are ignored for tasks the
// scheme leaves unscaled.
template <typename T>
Var<T> scheme_total_graph(Scheme scheme, Var<T> saliency, Var<T> classification, Var<T> sigma_s,
                          Var<T> sigma_c);

// Per-task term L / sigma^2 + ln(sigma + 1).
template <typename T>
Var<T> uncertainty_term(Var<T> loss, Var<T> sigma);

// d/dsigma of L / sigma^2 + ln(sigma + 1).
inline double sigma_gradient(double loss, double sigma) {
    return -2.0 * loss / (sigma * sigma * sigma) + 1.0 / (sigma + 1.0);
}

// Loss value at which sigma is stationary: f(s) = s^3 / (2s + 2).
inline double equilibrium_f(double sigma) { return sigma * sigma * sigma / (2.0 * sigma + 2.0); }

inline double equilibrium_f_derivative(double sigma) {
    return sigma * sigma * (2.0 * sigma + 3.0) / (2.0 * (sigma + 1.0) * (sigma + 1.0));
}

// Bracketed bisection for f(s) = loss. Throws ConfigError for loss <= 0.
double equilibrium_inverse(double loss);

inline constexpr double kSigmaFloor = 1e-4;

// Plain gradient descent of sigma under L_t / sigma^2 + ln(sigma + 1), one
// iterate per entry of `losses`, projected onto sigma >= kSigmaFloor. The
// returned trajectory starts with sigma0. Throws DivergenceError when the
// iterates blow up or oscillate with growing amplitude.
std::vector<double> sigma_descent_trace(std::span<const double> losses, double sigma0, double step);

}  // namespace mtunet
