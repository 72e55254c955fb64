#include "skicl/tensor/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "skicl/errors.hpp"

namespace skicl {

void zero_grads(const ParameterList& params) {
    for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
}

Adam::Adam(ParameterList params, AdamOptions options) : params_(std::move(params)), options_(options) {
    if (options_.learning_rate < 0.0) throw ConfigError("Adam: negative learning rate");
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void Adam::step() {
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) throw std::logic_error("Adam::step: parameter '" + p.name + "' has no gradient");
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double bias1 = 1.0 - std::pow(options_.beta1, t);
    const double bias2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor param = params_[k].tensor;
        auto g = param.grad();
        auto w = param.mutable_values();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            w[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
    }
}

double StepDecaySchedule::at(std::size_t epoch) const {
    if (every == 0) return initial;
    return initial * std::pow(factor, static_cast<double>(epoch / every));
}

}  // namespace skicl
