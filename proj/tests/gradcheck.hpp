#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mtunet/losses.hpp"
#include "mtunet/model.hpp"
#include "mtunet/rng.hpp"
#include "mtunet/tape.hpp"

namespace mtunet::testing {

// Builds a scalar from the given input vars.
using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradReport {
    double max_rel = 0.0;
    std::size_t checked = 0;
    std::size_t kinks = 0;
    std::string worst;
};

// Gradient entries smaller than this are compared on an absolute scale of
// kGradFloor * rel_tol instead of relative to themselves.
inline constexpr double kGradFloor = 1e-5;
inline constexpr double kGradTol = 1e-4;

inline double rel_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
    return std::abs(analytic - numeric) / scale;
}

inline void note(GradReport& r, double analytic, double numeric, const std::string& where) {
    const double e = rel_error(analytic, numeric);
    ++r.checked;
    if (!(e <= r.max_rel)) {
        r.max_rel = e;
        r.worst = where + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
}

// Central differences on every element of every input.
inline GradReport gradcheck(const ScalarFn& fn, std::vector<Tensor<double>> inputs, double h = 1e-5) {
    std::vector<Parameter<double>> params;
    params.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace_back("in" + std::to_string(i), inputs[i]);
    {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (auto& p : params) vars.push_back(tape.param(p));
        tape.backward(fn(tape, vars));
    }
    auto eval = [&] {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (const auto& t : inputs) vars.push_back(tape.constant(t));
        return fn(tape, vars).value()[0];
    };
    GradReport report;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double saved = inputs[i][j];
            inputs[i][j] = saved + h;
            const double fp = eval();
            inputs[i][j] = saved - h;
            const double fm = eval();
            inputs[i][j] = saved;
            note(report, params[i].grad[j], (fp - fm) / (2 * h),
                 "input " + std::to_string(i) + "[" + std::to_string(j) + "]");
        }
    }
    return report;
}

// Random linear read-out so every output element contributes.
inline Var<double> project(Var<double> out, const Tensor<double>& weights) {
    return sum(mul(out, out.tape->constant(weights)));
}

inline Tensor<double> random_tensor(SeededRng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero, for kinks and poles.
inline Tensor<double> random_away_from_zero(SeededRng& rng, Shape shape, double margin = 1e-2) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) {
        const double mag = rng.uniform(margin, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

inline Tensor<double> random_distribution(SeededRng& rng, Shape shape) {
    Tensor<double> t(std::move(shape));
    double total = 0;
    for (auto& v : t.data()) total += (v = rng.uniform(0.05, 1.0));
    for (auto& v : t.data()) v /= total;
    return t;
}

struct PrimitiveCase {
    std::string name;
    std::function<GradReport(SeededRng&)> run;
};

// One case per differentiable primitive, each drawing fresh inputs from rng.
inline std::vector<PrimitiveCase> primitive_cases() {
    std::vector<PrimitiveCase> cases;
    auto unary = [](std::string name, Shape in_shape, Shape out_shape,
                    std::function<Var<double>(Var<double>)> op, bool away_from_zero = false,
                    bool positive = false) {
        return PrimitiveCase{name, [=](SeededRng& rng) {
                                 Tensor<double> x = positive ? random_tensor(rng, in_shape, 0.1, 2.0)
                                                    : away_from_zero ? random_away_from_zero(rng, in_shape)
                                                                     : random_tensor(rng, in_shape);
                                 const auto w = random_tensor(rng, out_shape);
                                 return gradcheck(
                                     [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                         return project(op(v[0]), w);
                                     },
                                     {x});
                             }};
    };

    cases.push_back({"dense", [](SeededRng& rng) {
                         const auto x = random_tensor(rng, {5});
                         const auto W = random_tensor(rng, {4, 5});
                         const auto b = random_tensor(rng, {4});
                         const auto w = random_tensor(rng, {4});
                         return gradcheck(
                             [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return project(dense(v[0], v[1], v[2]), w);
                             },
                             {x, W, b});
                     }});
    for (std::size_t k : {1, 3, 5}) {
        cases.push_back({"conv2d_k" + std::to_string(k), [k](SeededRng& rng) {
                             const auto x = random_tensor(rng, {2, 5, 6});
                             const auto K = random_tensor(rng, {3, 2, k, k});
                             const auto b = random_tensor(rng, {3});
                             const auto w = random_tensor(rng, {3, 5, 6});
                             return gradcheck(
                                 [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                     return project(conv2d(v[0], v[1], v[2]), w);
                                 },
                                 {x, K, b});
                         }});
    }
    cases.push_back(unary("max_pool2", {2, 4, 6}, {2, 2, 3}, [](Var<double> x) { return max_pool2(x); }));
    cases.push_back(
        unary("upsample_nearest2", {2, 3, 2}, {2, 6, 4}, [](Var<double> x) { return upsample_nearest2(x); }));
    cases.push_back({"upsample2", [](SeededRng& rng) {
                         const auto x = random_tensor(rng, {3, 3, 2});
                         const auto K = random_tensor(rng, {2, 3, 3, 3});
                         const auto b = random_tensor(rng, {2});
                         const auto w = random_tensor(rng, {2, 6, 4});
                         return gradcheck(
                             [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return project(upsample2(v[0], v[1], v[2]), w);
                             },
                             {x, K, b});
                     }});
    cases.push_back({"concat_features", [](SeededRng& rng) {
                         const auto a = random_tensor(rng, {2, 3, 3});
                         const auto b = random_tensor(rng, {1, 3, 3});
                         const auto w = random_tensor(rng, {3, 3, 3});
                         return gradcheck(
                             [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return project(concat_features(v[0], v[1]), w);
                             },
                             {a, b});
                     }});
    cases.push_back(unary("relu", {3, 4, 4}, {3, 4, 4}, [](Var<double> x) { return relu(x); }, true));
    cases.push_back(
        unary("global_avg_pool", {3, 4, 5}, {3}, [](Var<double> x) { return global_avg_pool(x); }));
    cases.push_back(unary("softmax_vec", {6}, {6}, [](Var<double> x) { return softmax_vec(x); }));
    cases.push_back(
        unary("softmax_spatial", {1, 5, 4}, {1, 5, 4}, [](Var<double> x) { return softmax_spatial(x); }));
    cases.push_back({"dropout", [](SeededRng& rng) {
                         const auto x = random_tensor(rng, {2, 4, 4});
                         const auto w = random_tensor(rng, {2, 4, 4});
                         const std::uint64_t mask_seed = rng.next_u64();
                         return gradcheck(
                             [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                 SeededRng mask(mask_seed);
                                 return project(dropout(v[0], 0.4, true, mask), w);
                             },
                             {x});
                     }});
    cases.push_back(unary("sum", {3, 2, 2}, {1}, [](Var<double> x) { return sum(x); }));
    auto binary = [](std::string name, std::function<Var<double>(Var<double>, Var<double>)> op,
                     bool positive_rhs) {
        return PrimitiveCase{name, [=](SeededRng& rng) {
                                 const auto a = random_tensor(rng, {2, 3, 3});
                                 const auto b = positive_rhs ? random_tensor(rng, {2, 3, 3}, 0.2, 2.0)
                                                             : random_tensor(rng, {2, 3, 3});
                                 const auto w = random_tensor(rng, {2, 3, 3});
                                 return gradcheck(
                                     [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                         return project(op(v[0], v[1]), w);
                                     },
                                     {a, b});
                             }};
    };
    cases.push_back(binary("add", [](Var<double> a, Var<double> b) { return add(a, b); }, false));
    cases.push_back(binary("mul", [](Var<double> a, Var<double> b) { return mul(a, b); }, false));
    cases.push_back(binary("div", [](Var<double> a, Var<double> b) { return div(a, b); }, true));
    cases.push_back(unary("scale", {7}, {7}, [](Var<double> x) { return scale(x, -1.7); }));
    cases.push_back(unary("add_scalar", {7}, {7}, [](Var<double> x) { return add_scalar(x, 0.3); }));
    cases.push_back(unary("log", {7}, {7}, [](Var<double> x) { return log(x); }, false, true));
    cases.push_back({"cross_entropy", [](SeededRng& rng) {
                         const auto q = random_distribution(rng, {4, 4});
                         const auto r = random_tensor(rng, {4, 4}, 0.05, 1.0);
                         return gradcheck(
                             [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return cross_entropy(q, v[0]);
                             },
                             {r});
                     }});
    cases.push_back({"uncertainty_term", [](SeededRng& rng) {
                         const auto L = random_tensor(rng, {1}, 0.05, 3.0);
                         const auto s = random_tensor(rng, {1}, 0.2, 3.0);
                         return gradcheck(
                             [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                 return uncertainty_term(v[0], v[1]);
                             },
                             {L, s});
                     }});
    for (Scheme scheme : {Scheme::MTLS1, Scheme::MTLS2, Scheme::MTLS3}) {
        cases.push_back({"scheme_total_" + std::string(to_string(scheme)), [scheme](SeededRng& rng) {
                             const auto ls = random_tensor(rng, {1}, 0.05, 3.0);
                             const auto lc = random_tensor(rng, {1}, 0.05, 3.0);
                             const auto ss = random_tensor(rng, {1}, 0.2, 3.0);
                             const auto sc = random_tensor(rng, {1}, 0.2, 3.0);
                             return gradcheck(
                                 [&](Tape<double>&, const std::vector<Var<double>>& v) {
                                     return scheme_total_graph(scheme, v[0], v[1], v[2], v[3]);
                                 },
                                 {ls, lc, ss, sc});
                         }});
    }
    return cases;
}

inline ModelConfig tiny_model_config(Variant variant = Variant::MT) {
    ModelConfig c;
    c.height = 8;
    c.width = 8;
    c.depth = 2;
    c.base_features = 2;
    c.num_classes = 3;
    c.head_hidden = 4;
    c.variant = variant;
    return c;
}

// Full network under the MTLS1 objective against random targets, every
// weight and both sigmas checked by central differences.
inline GradReport model_gradcheck(std::uint64_t seed, Variant variant = Variant::MT, double h = 1e-5) {
    SeededRng rng(seed);
    const ModelConfig cfg = tiny_model_config(variant);
    auto model = Model<double>::build(cfg, rng);
    // Zero-initialised biases put every all-zero input patch exactly on a ReLU
    // kink, where central differences see only one side.
    for (auto* p : model.parameters()) {
        if (!p->id.ends_with("bias")) continue;
        for (auto& v : p->value.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 0.3);
    }
    const auto x = random_tensor(rng, {1, cfg.height, cfg.width}, 0.0, 1.0);
    const auto sal_target = random_distribution(rng, {cfg.height, cfg.width});
    Tensor<double> onehot({cfg.num_classes});
    onehot[rng.below(cfg.num_classes)] = 1.0;
    Parameter<double> sigma_s{"sigma_s", Tensor<double>::scalar(rng.uniform(0.5, 2.0))};
    Parameter<double> sigma_c{"sigma_c", Tensor<double>::scalar(rng.uniform(0.5, 2.0))};

    auto loss = [&](Tape<double>& tape, bool track) {
        auto out = model.forward_graph(tape, tape.constant(x), {}, track);
        auto ss = track ? tape.param(sigma_s) : tape.constant(sigma_s.value);
        auto sc = track ? tape.param(sigma_c) : tape.constant(sigma_c.value);
        auto zero = tape.constant(Tensor<double>::scalar(0.0));
        auto ls = out.saliency ? cross_entropy(sal_target, *out.saliency) : zero;
        auto lc = out.classes ? cross_entropy(onehot, *out.classes) : zero;
        return scheme_total_graph(Scheme::MTLS1, ls, lc, ss, sc);
    };

    model.zero_grad();
    sigma_s.zero_grad();
    sigma_c.zero_grad();
    {
        Tape<double> tape;
        tape.backward(loss(tape, true));
    }
    auto eval = [&] {
        Tape<double> tape;
        return loss(tape, false).value()[0];
    };

    GradReport report;
    ParamRefs<double> params = model.parameters();
    params.push_back(&sigma_s);
    params.push_back(&sigma_c);
    for (auto* p : params) {
        for (std::size_t j = 0; j < p->size(); ++j) {
            const double saved = p->value[j];
            auto central = [&](double step) {
                p->value[j] = saved + step;
                const double fp = eval();
                p->value[j] = saved - step;
                const double fm = eval();
                p->value[j] = saved;
                return (fp - fm) / (2 * step);
            };
            const double wide = central(h), narrow = central(h / 2);
            // A ReLU or max-pool switch inside [x-h, x+h] makes the two
            // quotients disagree; the quotient is then no oracle.
            if (rel_error(wide, narrow) > kGradTol) {
                ++report.kinks;
                continue;
            }
            note(report, p->grad[j], wide, p->id + "[" + std::to_string(j) + "]");
        }
    }
    return report;
}

}  // namespace mtunet::testing
