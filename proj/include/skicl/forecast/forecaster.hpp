#pragma once

#include <random>

#include "skicl/model/config.hpp"
#include "skicl/tensor/ops.hpp"
#include "skicl/tensor/optim.hpp"

namespace skicl {

/// out_i = r_i W_self + (sum_j adjacency[j, i] * r_j) W_nbr, no bias.
///   adjacency: [B, N, N], features: [B, N, ..., C], w_self/w_nbr: [C, C'].
Tensor message_passing(const Tensor& adjacency, const Tensor& features, const Tensor& w_self, const Tensor& w_nbr);

/// Temporal graph convolution block: causal dilated convolution along time
/// per variable, message passing across variables at every step, residual add
/// (through a 1x1 projection when channel counts differ).
class TgconvBlock {
public:
    TgconvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t dilation,
                bool allow_projection, std::mt19937_64& rng);

    /// features: [B, N, T, C_in], adjacency: [B, N, N] -> [B, N, T, C_out].
    Tensor forward(const Tensor& features, const Tensor& adjacency) const;

    void collect(ParameterList& params, const std::string& prefix) const;

    Tensor& conv_weight() { return conv_weight_; }
    Tensor& conv_bias() { return conv_bias_; }
    Tensor& w_self() { return w_self_; }
    Tensor& w_nbr() { return w_nbr_; }
    bool has_projection() const { return residual_weight_.defined(); }

private:
    std::size_t dilation_;
    Tensor conv_weight_;      // [K, C_in, C_out]
    Tensor conv_bias_;        // [C_out]
    Tensor w_self_;           // [C_out, C_out]
    Tensor w_nbr_;            // [C_out, C_out]
    Tensor residual_weight_;  // [C_in, C_out] or undefined
};

/// Stacked TGConv blocks followed by a shared linear regressor from each
/// variable's flattened final sequence representation to the horizon.
class Forecaster {
public:
    Forecaster(const TgconvConfig& config, std::size_t input_steps, std::size_t horizon, std::mt19937_64& rng);

    /// windows: [B, N, tau], adjacency: [B, N, N] -> forecasts [B, N, tau'].
    Tensor forward(const Tensor& windows, const Tensor& adjacency) const;

    void collect(ParameterList& params, const std::string& prefix) const;

    std::vector<TgconvBlock>& blocks() { return blocks_; }
    Tensor& regressor_weight() { return regressor_weight_; }
    Tensor& regressor_bias() { return regressor_bias_; }

private:
    std::vector<TgconvBlock> blocks_;
    Tensor regressor_weight_;  // [tau * C_last, tau']
    Tensor regressor_bias_;    // [tau']
};

/// Squared Euclidean error across variables, averaged over horizon steps and
/// batch: sum((pred - target)^2) / (B * tau'). Shapes [B, N, tau'].
Tensor forecasting_loss(const Tensor& prediction, const Tensor& target);

}  // namespace skicl
