#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mtunet/rng.hpp"
#include "mtunet/tensor.hpp"

namespace mtunet {

template <typename T>
class Tape;

// Handle to a node recorded on a Tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so parents always
// precede children and a single reverse sweep is a valid topological order.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value);
    // Leaf bound to a Parameter; backward() accumulates into param.grad.
    Var<T> param(Parameter<T>& p);

    // Records an op result. `fn` is dropped when no parent needs a gradient.
    Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn fn);

    // Seeds d(loss)/d(loss) = seed and sweeps the tape in reverse. Loss must
    // hold a single element.
    void backward(Var<T> loss, T seed = T{1});

    const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    // Gradient slot for a node, zero-allocated on first touch.
    Tensor<T>& grad(std::size_t id);
    bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter<T>* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape->value(id);
}

// y = W x + b for x:[n], W:[m,n], b:[m].
template <typename T>
Var<T> dense(Var<T> x, Var<T> weight, Var<T> bias);

// Stride-1 cross-correlation with zero "same" padding.
// x:[Fin,H,W], kernels:[Fout,Fin,k,k] with k odd, bias:[Fout].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernels, Var<T> bias);

// 2x2 max pooling; gradient goes to the first maximum in row-major order.
template <typename T>
Var<T> max_pool2(Var<T> x);

// Nearest-neighbour 2x replication.
template <typename T>
Var<T> upsample_nearest2(Var<T> x);

// Decoder upsampler: nearest 2x replication followed by a 3x3 convolution.
template <typename T>
Var<T> upsample2(Var<T> x, Var<T> kernels, Var<T> bias);

// Stacks along axis 0; all trailing extents must match.
template <typename T>
Var<T> concat_features(Var<T> a, Var<T> b);

template <typename T>
Var<T> relu(Var<T> x);

// [F,H,W] -> [F] of plane means.
template <typename T>
Var<T> global_avg_pool(Var<T> x);

template <typename T>
Var<T> softmax_vec(Var<T> x);

// Normalizes a single map ([1,H,W] or [H,W]) over all of its cells.
template <typename T>
Var<T> softmax_spatial(Var<T> x);

// Inverted dropout. Identity when train is false.
template <typename T>
Var<T> dropout(Var<T> x, double rate, bool train, SeededRng& rng);

template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> div(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T factor);

template <typename T>
Var<T> add_scalar(Var<T> x, T c);

// Natural log with the argument clamped to >= 1e-12.
template <typename T>
Var<T> log(Var<T> x);

// -sum_i q_i ln(max(r_i, 1e-12)) with q held constant; 0 ln 0 = 0.
template <typename T>
Var<T> cross_entropy(const Tensor<T>& q, Var<T> r);

inline constexpr double kLogFloor = 1e-12;

}  // namespace mtunet
