#pragma once

#include <cmath>
#include <random>

#include "skicl/tensor/tensor.hpp"

namespace skicl::detail {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) trainable tensor.
inline Tensor uniform_param(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = dist(rng);
    return Tensor(std::move(shape), std::move(values), true);
}

inline Tensor zero_param(Shape shape) { return Tensor(std::move(shape), 0.0, true); }

}  // namespace skicl::detail
