#pragma once

// Seeded parameter initialisers.

#include <cmath>
#include <random>
#include <string>

#include "vlscene/tensor.hpp"

namespace vlscene::init {

using Rng = std::mt19937_64;

inline Tensor uniform(Rng& rng, Shape shape, std::string name, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor::parameter(std::move(shape), std::move(v), std::move(name));
}

inline Tensor zeros(Shape shape, std::string name) {
    const std::size_t n = shape_numel(shape);
    return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0), std::move(name));
}

/// He-uniform bound for a layer followed by relu; `gain` scales residual branches down.
inline double he_bound(std::size_t fan_in, double gain = 1.0) {
    return gain * std::sqrt(6.0 / static_cast<double>(fan_in));
}

/// Conv weights [C_out, C_in, k...] with the fan-in taken from every axis but the first.
inline Tensor conv(Rng& rng, Shape shape, std::string name, double gain = 1.0) {
    const std::size_t fan_in = shape_numel(shape) / shape[0];
    return uniform(rng, shape, std::move(name), he_bound(fan_in, gain));
}

}  // namespace vlscene::init
