#include "skicl/forecast/forecaster.hpp"

#include "../model/init.hpp"
#include "skicl/errors.hpp"

namespace skicl {

Tensor message_passing(const Tensor& adjacency, const Tensor& features, const Tensor& w_self, const Tensor& w_nbr) {
    if (w_self.shape() != w_nbr.shape()) {
        throw std::invalid_argument("message_passing: weight shapes " + shape_to_string(w_self.shape()) + " and " +
                                    shape_to_string(w_nbr.shape()) + " differ");
    }
    return add(matmul(features, w_self), matmul(graph_aggregate(adjacency, features), w_nbr));
}

TgconvBlock::TgconvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t dilation,
                         bool allow_projection, std::mt19937_64& rng)
    : dilation_(dilation) {
    if (dilation == 0 || kernel == 0) throw ConfigError("tgconv: kernel and dilation must be >= 1");
    conv_weight_ = detail::uniform_param({kernel, in_channels, out_channels}, kernel * in_channels, rng);
    conv_bias_ = detail::zero_param({out_channels});
    w_self_ = detail::uniform_param({out_channels, out_channels}, out_channels, rng);
    w_nbr_ = detail::uniform_param({out_channels, out_channels}, out_channels, rng);
    if (in_channels != out_channels) {
        if (!allow_projection) {
            throw ConfigError("tgconv: channel change " + std::to_string(in_channels) + " -> " +
                              std::to_string(out_channels) + " requires the residual projection");
        }
        residual_weight_ = detail::uniform_param({in_channels, out_channels}, in_channels, rng);
    }
}

Tensor TgconvBlock::forward(const Tensor& features, const Tensor& adjacency) const {
    Tensor temporal = relu(conv1d(features, conv_weight_, conv_bias_, dilation_, ConvPadding::causal));
    Tensor mixed = message_passing(adjacency, temporal, w_self_, w_nbr_);
    Tensor residual = residual_weight_.defined() ? matmul(features, residual_weight_) : features;
    return add(residual, mixed);
}

void TgconvBlock::collect(ParameterList& params, const std::string& prefix) const {
    params.push_back({prefix + "conv.weight", conv_weight_});
    params.push_back({prefix + "conv.bias", conv_bias_});
    params.push_back({prefix + "w_self", w_self_});
    params.push_back({prefix + "w_nbr", w_nbr_});
    if (residual_weight_.defined()) params.push_back({prefix + "residual.weight", residual_weight_});
}

Forecaster::Forecaster(const TgconvConfig& config, std::size_t input_steps, std::size_t horizon,
                       std::mt19937_64& rng) {
    if (config.channels.empty() || config.channels.size() != config.dilations.size()) {
        throw ConfigError("tgconv: channels and dilations must be non-empty and equally long");
    }
    std::size_t in_channels = 1;
    for (std::size_t b = 0; b < config.channels.size(); ++b) {
        blocks_.emplace_back(in_channels, config.channels[b], config.kernel, config.dilations[b],
                             config.residual_projection, rng);
        in_channels = config.channels[b];
    }
    const std::size_t flat = input_steps * in_channels;
    regressor_weight_ = detail::uniform_param({flat, horizon}, flat, rng);
    regressor_bias_ = detail::zero_param({horizon});
}

Tensor Forecaster::forward(const Tensor& windows, const Tensor& adjacency) const {
    if (windows.dim() != 3) throw std::invalid_argument("forecaster: expected [B, N, tau] windows");
    const std::size_t batch = windows.extent(0), nodes = windows.extent(1), steps = windows.extent(2);
    Tensor h = reshape(windows, {batch, nodes, steps, 1});
    for (const auto& block : blocks_) h = block.forward(h, adjacency);
    h = reshape(h, {batch, nodes, h.numel() / (batch * nodes)});
    return add(matmul(h, regressor_weight_), regressor_bias_);
}

void Forecaster::collect(ParameterList& params, const std::string& prefix) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].collect(params, prefix + "block" + std::to_string(b) + ".");
    params.push_back({prefix + "regressor.weight", regressor_weight_});
    params.push_back({prefix + "regressor.bias", regressor_bias_});
}

Tensor forecasting_loss(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape() || prediction.dim() != 3) {
        throw std::invalid_argument("forecasting_loss: shapes " + shape_to_string(prediction.shape()) + " and " +
                                    shape_to_string(target.shape()) + " must be equal [B, N, tau']");
    }
    const double norm = static_cast<double>(prediction.extent(0) * prediction.extent(2));
    return scale(squared_error_sum(prediction, target), 1.0 / norm);
}

}  // namespace skicl
