#include "mtunet/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace mtunet {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b) {
    if (a.tape != b.tape) throw Error("operands recorded on different tapes");
}

// Rows are (channel, ky, kx); columns are output pixels.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* cols) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = x + c * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = cols + ((c * k + ky) * k + kx) * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    T* out = row + y * W;
                    const std::ptrdiff_t sy = y + dy;
                    if (sy < 0 || sy >= H) {
                        std::fill(out, out + W, T{0});
                        continue;
                    }
                    const T* src = plane + sy * W;
                    std::fill(out, out + x0, T{0});
                    for (std::ptrdiff_t xx = x0; xx < x1; ++xx) out[xx] = src[xx + dx];
                    std::fill(out + std::max(x0, x1), out + W, T{0});
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* x) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t c = 0; c < channels; ++c) {
        T* plane = x + c * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = cols + ((c * k + ky) * k + kx) * h * w;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    const T* in = row + y * W;
                    T* dst = plane + sy * W;
                    for (std::ptrdiff_t xx = x0; xx < x1; ++xx) dst[xx + dx] += in[xx];
                }
            }
        }
    }
}

template <typename T>
T clamp_log_arg(T v) {
    return std::max(v, static_cast<T>(kLogFloor));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = std::any_of(parents.begin(), parents.end(),
                               [this](std::size_t p) { return nodes_[p].needs_grad; });
    if (n.needs_grad) {
        n.parents = std::move(parents);
        n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss, T seed) {
    if (loss.tape != this) throw Error("loss recorded on a different tape");
    if (nodes_[loss.id].value.size() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " +
                         shape_str(nodes_[loss.id].value.shape()));
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad(loss.id)[0] = seed;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.needs_grad) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param) {
            auto& pg = n.param->grad;
            for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Primitives

template <typename T>
Var<T> dense(Var<T> x, Var<T> weight, Var<T> bias) {
    require_same_tape(x, weight);
    require_same_tape(x, bias);
    const auto& xv = x.value();
    const auto& wv = weight.value();
    const auto& bv = bias.value();
    require(xv.rank() == 1 && wv.rank() == 2 && bv.rank() == 1, "dense: expects x[n], W[m,n], b[m]");
    const std::size_t m = wv.dim(0), n = wv.dim(1);
    require(xv.dim(0) == n && bv.dim(0) == m,
            "dense: shape mismatch x" + shape_str(xv.shape()) + " W" + shape_str(wv.shape()) + " b" +
                shape_str(bv.shape()));
    Tensor<T> y({m});
    Eigen::Map<VecT<T>>(y.raw(), m) =
        CMapR<T>(wv.raw(), m, n) * Eigen::Map<const VecT<T>>(xv.raw(), n) +
        Eigen::Map<const VecT<T>>(bv.raw(), m);
    const std::size_t xi = x.id, wi = weight.id, bi = bias.id;
    return x.tape->record(std::move(y), {xi, wi, bi}, [xi, wi, bi, m, n](Tape<T>& t, std::size_t self) {
        Eigen::Map<const VecT<T>> gy(t.grad(self).raw(), m);
        if (t.needs_grad(xi))
            Eigen::Map<VecT<T>>(t.grad(xi).raw(), n).noalias() +=
                CMapR<T>(t.value(wi).raw(), m, n).transpose() * gy;
        if (t.needs_grad(wi))
            MapR<T>(t.grad(wi).raw(), m, n).noalias() +=
                gy * Eigen::Map<const VecT<T>>(t.value(xi).raw(), n).transpose();
        if (t.needs_grad(bi)) Eigen::Map<VecT<T>>(t.grad(bi).raw(), m) += gy;
    });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernels, Var<T> bias) {
    require_same_tape(x, kernels);
    require_same_tape(x, bias);
    const auto& xv = x.value();
    const auto& kv = kernels.value();
    const auto& bv = bias.value();
    require(xv.rank() == 3 && kv.rank() == 4 && bv.rank() == 1,
            "conv2d: expects x[F,H,W], kernels[Fo,Fi,k,k], bias[Fo]");
    const std::size_t fin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const std::size_t fout = kv.dim(0), k = kv.dim(2);
    require(kv.dim(1) == fin && kv.dim(3) == k && bv.dim(0) == fout,
            "conv2d: shape mismatch x" + shape_str(xv.shape()) + " kernels" + shape_str(kv.shape()));
    require(k % 2 == 1, "conv2d: kernel extent must be odd, got " + std::to_string(k));
    const std::size_t hw = h * w, rows = fin * k * k;

    auto cols = std::make_shared<AlignedVector<T>>(rows * hw);
    im2col(xv.raw(), fin, h, w, k, cols->data());

    Tensor<T> y({fout, h, w});
    MapR<T> ym(y.raw(), fout, hw);
    ym.noalias() = CMapR<T>(kv.raw(), fout, rows) * CMapR<T>(cols->data(), rows, hw);
    ym.colwise() += Eigen::Map<const VecT<T>>(bv.raw(), fout);

    const std::size_t xi = x.id, ki = kernels.id, bi = bias.id;
    return x.tape->record(
        std::move(y), {xi, ki, bi},
        [xi, ki, bi, fin, fout, h, w, k, rows, hw, cols](Tape<T>& t, std::size_t self) {
            CMapR<T> gy(t.grad(self).raw(), fout, hw);
            if (t.needs_grad(ki))
                MapR<T>(t.grad(ki).raw(), fout, rows).noalias() +=
                    gy * CMapR<T>(cols->data(), rows, hw).transpose();
            if (t.needs_grad(bi)) Eigen::Map<VecT<T>>(t.grad(bi).raw(), fout) += gy.rowwise().sum();
            if (t.needs_grad(xi)) {
                MatR<T> gcols = CMapR<T>(t.value(ki).raw(), fout, rows).transpose() * gy;
                col2im_add(gcols.data(), fin, h, w, k, t.grad(xi).raw());
            }
        });
}

template <typename T>
Var<T> max_pool2(Var<T> x) {
    const auto& xv = x.value();
    require(xv.rank() == 3, "max_pool2: expects [F,H,W]");
    const std::size_t f = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    require(h % 2 == 0 && w % 2 == 0, "max_pool2: odd spatial extent " + shape_str(xv.shape()));
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor<T> y({f, oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(f * oh * ow);
    for (std::size_t c = 0; c < f; ++c)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (c * h + 2 * oy) * w + 2 * ox;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (c * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                const std::size_t o = (c * oh + oy) * ow + ox;
                y[o] = xv[best];
                (*argmax)[o] = best;
            }
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, argmax](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        auto& gx = t.grad(xi);
        for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += gy[o];
    });
}

template <typename T>
Var<T> upsample_nearest2(Var<T> x) {
    const auto& xv = x.value();
    require(xv.rank() == 3, "upsample2: expects [F,H,W]");
    const std::size_t f = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor<T> y({f, 2 * h, 2 * w});
    for (std::size_t c = 0; c < f; ++c)
        for (std::size_t yy = 0; yy < 2 * h; ++yy)
            for (std::size_t xx = 0; xx < 2 * w; ++xx) y.at(c, yy, xx) = xv.at(c, yy / 2, xx / 2);
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, f, h, w](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        auto& gx = t.grad(xi);
        for (std::size_t c = 0; c < f; ++c)
            for (std::size_t yy = 0; yy < 2 * h; ++yy)
                for (std::size_t xx = 0; xx < 2 * w; ++xx) gx.at(c, yy / 2, xx / 2) += gy.at(c, yy, xx);
    });
}

template <typename T>
Var<T> upsample2(Var<T> x, Var<T> kernels, Var<T> bias) {
    return conv2d(upsample_nearest2(x), kernels, bias);
}

template <typename T>
Var<T> concat_features(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    require(av.rank() == bv.rank() && av.rank() >= 1, "concat_features: rank mismatch");
    for (std::size_t i = 1; i < av.rank(); ++i)
        require(av.dim(i) == bv.dim(i),
                "concat_features: extent mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    Shape s = av.shape();
    s[0] += bv.dim(0);
    AlignedVector<T> data;
    data.reserve(av.size() + bv.size());
    data.insert(data.end(), av.data().begin(), av.data().end());
    data.insert(data.end(), bv.data().begin(), bv.data().end());
    const std::size_t ai = a.id, bi = b.id, na = av.size(), nb = bv.size();
    return a.tape->record(Tensor<T>(std::move(s), std::move(data)), {ai, bi},
                          [ai, bi, na, nb](Tape<T>& t, std::size_t self) {
                              const auto& g = t.grad(self);
                              if (t.needs_grad(ai)) {
                                  auto& ga = t.grad(ai);
                                  for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                              }
                              if (t.needs_grad(bi)) {
                                  auto& gb = t.grad(bi);
                                  for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                              }
                          });
}

template <typename T>
Var<T> relu(Var<T> x) {
    Tensor<T> y = x.value();
    for (auto& v : y.data()) v = v > T{0} ? v : T{0};
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        const auto& xv = t.value(xi);
        auto& gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (xv[i] > T{0}) gx[i] += gy[i];
    });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
    const auto& xv = x.value();
    require(xv.rank() == 3, "global_avg_pool: expects [F,H,W]");
    const std::size_t f = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
    Tensor<T> y({f});
    for (std::size_t c = 0; c < f; ++c) {
        T acc{0};
        for (std::size_t i = 0; i < plane; ++i) acc += xv[c * plane + i];
        y[c] = acc / static_cast<T>(plane);
    }
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, f, plane](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        auto& gx = t.grad(xi);
        for (std::size_t c = 0; c < f; ++c) {
            const T g = gy[c] / static_cast<T>(plane);
            for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += g;
        }
    });
}

namespace {

template <typename T>
Var<T> softmax_all(Var<T> x) {
    Tensor<T> y = x.value();
    T mx = -std::numeric_limits<T>::infinity();
    for (T v : y.data()) mx = std::max(mx, v);
    // Accumulate the normalizer in double so float maps of a few thousand
    // cells still sum to 1 within 1e-6.
    double z = 0.0;
    for (auto& v : y.data()) {
        v = std::exp(v - mx);
        z += static_cast<double>(v);
    }
    for (auto& v : y.data()) v = static_cast<T>(static_cast<double>(v) / z);
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        const auto& yv = t.value(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < yv.size(); ++i) dot += static_cast<double>(gy[i]) * yv[i];
        auto& gx = t.grad(xi);
        for (std::size_t i = 0; i < yv.size(); ++i) gx[i] += yv[i] * (gy[i] - static_cast<T>(dot));
    });
}

}  // namespace

template <typename T>
Var<T> softmax_vec(Var<T> x) {
    require(x.value().rank() == 1, "softmax_vec: expects a vector, got " + shape_str(x.shape()));
    return softmax_all(x);
}

template <typename T>
Var<T> softmax_spatial(Var<T> x) {
    const auto& s = x.shape();
    require(s.size() == 2 || (s.size() == 3 && s[0] == 1),
            "softmax_spatial: expects a single map, got " + shape_str(s));
    return softmax_all(x);
}

template <typename T>
Var<T> dropout(Var<T> x, double rate, bool train, SeededRng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0,1)");
    if (!train || rate == 0.0) return x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> y = x.value();
    auto mask = std::make_shared<std::vector<T>>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        (*mask)[i] = rng.uniform() >= rate ? keep_scale : T{0};
        y[i] *= (*mask)[i];
    }
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, mask](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        auto& gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (*mask)[i];
    });
}

template <typename T>
Var<T> sum(Var<T> x) {
    T acc{0};
    for (T v : x.value().data()) acc += v;
    const std::size_t xi = x.id;
    return x.tape->record(Tensor<T>::scalar(acc), {xi}, [xi](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0];
        for (auto& v : t.grad(xi).data()) v += g;
    });
}

namespace {

template <typename T, typename Fwd, typename Bwd>
Var<T> binary(Var<T> a, Var<T> b, const char* name, Fwd fwd, Bwd bwd) {
    require_same_tape(a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    require(av.shape() == bv.shape(), std::string(name) + ": shape mismatch " + shape_str(av.shape()) +
                                          " vs " + shape_str(bv.shape()));
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(av[i], bv[i]);
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi, bwd](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& av2 = t.value(ai);
        const auto& bv2 = t.value(bi);
        const bool need_a = t.needs_grad(ai), need_b = t.needs_grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            T da{0}, db{0};
            bwd(av2[i], bv2[i], g[i], da, db);
            if (need_a) t.grad(ai)[i] += da;
            if (need_b) t.grad(bi)[i] += db;
        }
    });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    return binary(
        a, b, "add", [](T x, T y) { return x + y; },
        [](T, T, T g, T& da, T& db) {
            da = g;
            db = g;
        });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    return binary(
        a, b, "mul", [](T x, T y) { return x * y; },
        [](T x, T y, T g, T& da, T& db) {
            da = g * y;
            db = g * x;
        });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
    return binary(
        a, b, "div", [](T x, T y) { return x / y; },
        [](T x, T y, T g, T& da, T& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
    Tensor<T> y = x.value();
    for (auto& v : y.data()) v *= factor;
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, factor](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
    Tensor<T> y = x.value();
    for (auto& v : y.data()) v += c;
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

template <typename T>
Var<T> log(Var<T> x) {
    Tensor<T> y = x.value();
    for (auto& v : y.data()) v = std::log(clamp_log_arg(v));
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& xv = t.value(xi);
        auto& gx = t.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] >= static_cast<T>(kLogFloor)) gx[i] += g[i] / xv[i];
    });
}

template <typename T>
Var<T> cross_entropy(const Tensor<T>& q, Var<T> r) {
    const auto& rv = r.value();
    require(q.size() == rv.size(), "cross_entropy: length mismatch " + shape_str(q.shape()) + " vs " +
                                       shape_str(rv.shape()));
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] != T{0}) acc -= static_cast<double>(q[i]) * std::log(static_cast<double>(clamp_log_arg(rv[i])));
    auto target = std::make_shared<Tensor<T>>(q);
    const std::size_t ri = r.id;
    return r.tape->record(Tensor<T>::scalar(static_cast<T>(acc)), {ri},
                          [ri, target](Tape<T>& t, std::size_t self) {
                              const T g = t.grad(self)[0];
                              const auto& rv2 = t.value(ri);
                              auto& gr = t.grad(ri);
                              for (std::size_t i = 0; i < gr.size(); ++i)
                                  if ((*target)[i] != T{0} && rv2[i] >= static_cast<T>(kLogFloor))
                                      gr[i] -= g * (*target)[i] / rv2[i];
                          });
}

#define MTUNET_INSTANTIATE(T)                                                    \
    template class Tape<T>;                                                      \
    template Var<T> dense(Var<T>, Var<T>, Var<T>);                               \
    template Var<T> conv2d(Var<T>, Var<T>, Var<T>);                              \
    template Var<T> max_pool2(Var<T>);                                           \
    template Var<T> upsample_nearest2(Var<T>);                                   \
    template Var<T> upsample2(Var<T>, Var<T>, Var<T>);                           \
    template Var<T> concat_features(Var<T>, Var<T>);                             \
    template Var<T> relu(Var<T>);                                                \
    template Var<T> global_avg_pool(Var<T>);                                     \
    template Var<T> softmax_vec(Var<T>);                                         \
    template Var<T> softmax_spatial(Var<T>);                                     \
    template Var<T> dropout(Var<T>, double, bool, SeededRng&);                   \
    template Var<T> sum(Var<T>);                                                 \
    template Var<T> add(Var<T>, Var<T>);                                         \
    template Var<T> mul(Var<T>, Var<T>);                                         \
    template Var<T> div(Var<T>, Var<T>);                                         \
    template Var<T> scale(Var<T>, T);                                            \
    template Var<T> add_scalar(Var<T>, T);                                       \
    template Var<T> log(Var<T>);                                                 \
    template Var<T> cross_entropy(const Tensor<T>&, Var<T>);

MTUNET_INSTANTIATE(float)
MTUNET_INSTANTIATE(double)

#undef MTUNET_INSTANTIATE

}  // namespace mtunet
