#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "skicl/tensor/tensor.hpp"

namespace skicl {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

void zero_grads(const ParameterList& params);

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are allocated per parameter on construction.
class Adam {
public:
    Adam(ParameterList params, AdamOptions options = {});

    /// Throws std::logic_error naming the first parameter without a gradient.
    void step();

    void set_learning_rate(double lr) { options_.learning_rate = lr; }
    double learning_rate() const { return options_.learning_rate; }
    std::size_t steps_taken() const { return step_; }

    const std::vector<double>& first_moment(std::size_t index) const { return m_.at(index); }
    const std::vector<double>& second_moment(std::size_t index) const { return v_.at(index); }

private:
    ParameterList params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t step_ = 0;
};

/// Piecewise-constant decay: lr(epoch) = initial * factor^floor(epoch / every).
/// Epochs are zero-based.
struct StepDecaySchedule {
    double initial = 1e-4;
    double factor = 0.8;
    std::size_t every = 20;

    double at(std::size_t epoch) const;
};

}  // namespace skicl
