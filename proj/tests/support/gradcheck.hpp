#pragma once

// Central finite-difference oracle for reverse-mode gradients. Independent of
// the backward rules: it only evaluates forward values under NoGradGuard.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "skicl/tensor/tensor.hpp"

namespace skicl::testing {

struct GradCheckResult {
    double worst_relative_error = 0.0;
    std::size_t worst_input = 0;
};

/// Relative error between analytic and numeric gradient vectors of each
/// input, ||a - n|| / max(||a||, ||n||, floor). Reports the worst input.
inline GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                       double step = 1e-6, double floor = 1e-8) {
    for (auto& t : inputs) t.zero_grad();
    Tensor loss = loss_fn();
    backward(loss);

    GradCheckResult result;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& t = inputs[k];
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
        std::vector<double> numeric(t.numel(), 0.0);
        auto values = t.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            NoGradGuard guard;
            values[i] = saved + step;
            const double plus = loss_fn().item();
            values[i] = saved - step;
            const double minus = loss_fn().item();
            values[i] = saved;
            numeric[i] = (plus - minus) / (2.0 * step);
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
        if (rel > result.worst_relative_error) {
            result.worst_relative_error = rel;
            result.worst_input = k;
        }
    }
    return result;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace skicl::testing
