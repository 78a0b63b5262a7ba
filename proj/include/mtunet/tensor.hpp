#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mtunet/errors.hpp"

namespace mtunet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& s);

// Cache-line aligned storage. Eigen's vectorized kernels peel a prefix that
// depends on the buffer address, so unaligned buffers make float sums vary
// from run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense feature-major array: [features, height, width] for maps, [n] for
// vectors. Storage is contiguous and row-major within each feature plane.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), AlignedVector<T>(data)) {}
    Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), AlignedVector<T>(data.begin(), data.end())) {}
    Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor vector(std::initializer_list<T> values) {
        return Tensor({values.size()}, AlignedVector<T>(values));
    }
    static Tensor scalar(T v) { return Tensor({1}, AlignedVector<T>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Feature-plane accessors for rank-3 maps.
    T& at(std::size_t f, std::size_t y, std::size_t x) {
        return data_[(f * shape_[1] + y) * shape_[2] + x];
    }
    const T& at(std::size_t f, std::size_t y, std::size_t x) const {
        return data_[(f * shape_[1] + y) * shape_[2] + x];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    AlignedVector<T> data_;
};

// A trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
    std::string id;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string name, Tensor<T> v)
        : id(std::move(name)), value(std::move(v)), grad(value.shape()) {}

    std::size_t size() const { return value.size(); }
    void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
using ParamRefs = std::vector<Parameter<T>*>;

}  // namespace mtunet
