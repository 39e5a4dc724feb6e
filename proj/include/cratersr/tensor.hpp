#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "cratersr/errors.hpp"

namespace cratersr::nn {

// Dense row-major tensor of doubles. Shape is dynamic; most call sites use
// rank 1..4.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        values.assign(element_count(), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (values.size() != element_count())
            throw ArgumentError("Tensor: shape/value size mismatch");
    }

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::size_t rank() const { return shape.size(); }

    double* data() { return values.data(); }
    const double* data() const { return values.data(); }

    // Rank-specific accessors; no bounds checks in release paths.
    double& at2(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }

    double& at3(std::size_t c, std::size_t i, std::size_t j) {
        return values[(c * shape[1] + i) * shape[2] + j];
    }
    double at3(std::size_t c, std::size_t i, std::size_t j) const {
        return values[(c * shape[1] + i) * shape[2] + j];
    }

    double& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return values[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    double at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return values[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    void fill(double v) { std::fill(values.begin(), values.end(), v); }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw ArgumentError(std::string(what) + ": shape mismatch");
}

} // namespace cratersr::nn
