#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "meshfield/common.hpp"

namespace meshfield {

/// Dense row-major tensor. Rank 0 is a scalar (one element), rank 1 a
/// vector, rank 2 a matrix. Higher ranks only pass through reshape.
template <class T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, T fill = T(0))
        : shape(std::move(s)), data(extent(shape), fill) {}

    static std::size_t extent(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    static Tensor scalar(T v) {
        Tensor t(std::vector<std::size_t>{});
        t.data[0] = v;
        return t;
    }

    static Tensor vec(std::vector<T> v) {
        Tensor t;
        t.shape = {v.size()};
        t.data = std::move(v);
        return t;
    }

    static Tensor matrix(std::size_t r, std::size_t c, std::vector<T> v) {
        Tensor t;
        t.shape = {r, c};
        t.data = std::move(v);
        if (t.data.size() != r * c) throw ConfigError("matrix: data length does not match shape");
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 1); }
    std::size_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

    T& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    T operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    T& operator[](std::size_t i) { return data[i]; }
    T operator[](std::size_t i) const { return data[i]; }

    T item() const {
        if (size() != 1) throw ConfigError("item: tensor is not a scalar");
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ']';
        return os.str();
    }
};

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.shape);
}

}  // namespace meshfield
