#include "skicl/graph/graph_inference.hpp"

#include "../model/init.hpp"
#include "skicl/errors.hpp"

namespace skicl {

NodeEncoder::NodeEncoder(const EncoderConfig& config, std::size_t input_steps, std::mt19937_64& rng)
    : config_(config) {
    if (config.channels.empty() || config.channels.size() != config.kernels.size()) {
        throw ConfigError("encoder: channels and kernels must be non-empty and equally long");
    }
    if (config.dilation == 0) throw ConfigError("encoder: dilation must be >= 1");
    if (input_steps < config.receptive_field()) {
        throw ConfigError("encoder: input window of " + std::to_string(input_steps) +
                          " steps is shorter than the receptive field " + std::to_string(config.receptive_field()));
    }
    std::size_t in_channels = 1;
    std::size_t steps = input_steps;
    for (std::size_t l = 0; l < config.channels.size(); ++l) {
        const std::size_t k = config.kernels[l];
        const std::size_t c = config.channels[l];
        if (k == 0 || c == 0) throw ConfigError("encoder: zero kernel or channel count");
        ConvLayer layer;
        layer.weight = detail::uniform_param({k, in_channels, c}, k * in_channels, rng);
        layer.bias = detail::zero_param({c});
        layer.gamma = Tensor({c}, 1.0, true);
        layer.beta = detail::zero_param({c});
        layer.norm.running_mean = Tensor({c}, 0.0);
        layer.norm.running_var = Tensor({c}, 1.0);
        layers_.push_back(std::move(layer));
        steps -= config.dilation * (k - 1);
        in_channels = c;
    }
    output_steps_ = steps;
    const std::size_t flat = output_steps_ * in_channels;
    proj_weight_ = detail::uniform_param({flat, config.embedding_width}, flat, rng);
    proj_bias_ = detail::zero_param({config.embedding_width});
}

Tensor NodeEncoder::forward(const Tensor& windows, bool training) {
    if (windows.dim() != 3) throw std::invalid_argument("encoder: expected [B, N, tau] windows");
    const std::size_t batch = windows.extent(0), nodes = windows.extent(1), steps = windows.extent(2);
    Tensor h = reshape(windows, {batch * nodes, steps, 1});
    for (auto& layer : layers_) {
        h = conv1d(h, layer.weight, layer.bias, config_.dilation, ConvPadding::valid);
        if (config_.batch_norm) h = batch_norm(h, layer.gamma, layer.beta, layer.norm, training);
        h = relu(h);
    }
    h = reshape(h, {batch, nodes, h.numel() / (batch * nodes)});
    return add(matmul(h, proj_weight_), proj_bias_);
}

void NodeEncoder::collect(ParameterList& params, ParameterList& buffers, const std::string& prefix) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = prefix + "conv" + std::to_string(l) + ".";
        params.push_back({p + "weight", layers_[l].weight});
        params.push_back({p + "bias", layers_[l].bias});
        if (config_.batch_norm) {
            params.push_back({p + "bn_gamma", layers_[l].gamma});
            params.push_back({p + "bn_beta", layers_[l].beta});
            buffers.push_back({p + "bn_running_mean", layers_[l].norm.running_mean});
            buffers.push_back({p + "bn_running_var", layers_[l].norm.running_var});
        }
    }
    params.push_back({prefix + "proj.weight", proj_weight_});
    params.push_back({prefix + "proj.bias", proj_bias_});
}

EdgeGenerator::EdgeGenerator(EdgeKind kind, std::size_t embedding_width, const EdgeGeneratorConfig& config,
                             std::mt19937_64& rng)
    : kind_(kind) {
    if (embedding_width == 0 || config.hidden == 0) throw ConfigError("edge generator: zero width");
    // fan-in of the conceptual first layer is the concatenated width 2h.
    w_src_ = detail::uniform_param({embedding_width, config.hidden}, 2 * embedding_width, rng);
    w_dst_ = detail::uniform_param({embedding_width, config.hidden}, 2 * embedding_width, rng);
    b_hidden_ = detail::zero_param({config.hidden});
    w_out_ = detail::uniform_param({config.hidden, 1}, config.hidden, rng);
    b_out_ = detail::zero_param({1});
}

Tensor EdgeGenerator::logits(const Tensor& z) const {
    if (z.dim() != 3) throw std::invalid_argument("edge generator: expected [B, N, h] embeddings");
    const std::size_t batch = z.extent(0), nodes = z.extent(1);
    Tensor hidden = relu(add(pairwise_add(matmul(z, w_src_), matmul(z, w_dst_)), b_hidden_));
    Tensor scores = reshape(matmul(hidden, w_out_), {batch, nodes, nodes});
    return add(scores, b_out_);
}

Tensor EdgeGenerator::forward(const Tensor& z) const { return activate_edges(logits(z), kind_); }

void EdgeGenerator::collect(ParameterList& params, const std::string& prefix) const {
    params.push_back({prefix + "w_src", w_src_});
    params.push_back({prefix + "w_dst", w_dst_});
    params.push_back({prefix + "b_hidden", b_hidden_});
    params.push_back({prefix + "w_out", w_out_});
    params.push_back({prefix + "b_out", b_out_});
}

Tensor activate_edges(const Tensor& logits, EdgeKind kind) {
    return kind == EdgeKind::binary ? sigmoid(logits) : relu(logits);
}

Eigen::MatrixXd binarize(const Eigen::MatrixXd& prob, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("binarize: threshold must lie in (0, 1), got " + std::to_string(threshold));
    }
    return (prob.array() > threshold).cast<double>().matrix();
}

}  // namespace skicl
