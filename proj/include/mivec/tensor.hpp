#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "mivec/errors.hpp"

namespace mivec {

// Dense row-major tensor, rank <= 4. Activation maps are laid out
// channels-last {H, W, C}; conv weights are {C_out, KH, KW, C_in}.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int64_t> dims) : dims_(std::move(dims)) {
        int64_t n = 1;
        for (int64_t d : dims_) {
            if (d <= 0) throw ValidationError("tensor dim must be positive");
            n *= d;
        }
        data_.assign(static_cast<size_t>(n), T(0));
    }

    TensorT(std::initializer_list<int64_t> dims) : TensorT(std::vector<int64_t>(dims)) {}

    const std::vector<int64_t>& dims() const { return dims_; }
    int64_t dim(size_t i) const { return dims_[i]; }
    size_t rank() const { return dims_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * dims_[1] + j)]; }
    const T& at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * dims_[1] + j)]; }

    T& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * dims_[1] + j) * dims_[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * dims_[1] + j) * dims_[2] + k)];
    }

    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    TensorT zeros_like() const {
        TensorT t;
        t.dims_ = dims_;
        t.data_.assign(data_.size(), T(0));
        return t;
    }

    bool same_shape(const TensorT& o) const { return dims_ == o.dims_; }

    bool bit_equal(const TensorT& o) const {
        return dims_ == o.dims_ &&
               std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(T)) == 0;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims_[i]);
        }
        return s + ")";
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> t(dims_);
        for (int64_t i = 0; i < numel(); ++i) t[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return t;
    }

private:
    std::vector<int64_t> dims_;
    std::vector<T> data_;

    template <typename U>
    friend class TensorT;
};

using Tensor = TensorT<float>;

} // namespace mivec
