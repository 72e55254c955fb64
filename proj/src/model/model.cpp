#include "skicl/model/model.hpp"

#include <algorithm>
#include <random>

#include "skicl/errors.hpp"
#include "skicl/json_keys.hpp"
#include "skicl/tensor/checkpoint.hpp"

namespace skicl {

std::string to_string(EdgeKind kind) { return kind == EdgeKind::binary ? "binary" : "continuous"; }

EdgeKind edge_kind_from_string(const std::string& name) {
    if (name == "binary") return EdgeKind::binary;
    if (name == "continuous") return EdgeKind::continuous;
    throw ConfigError("unknown edge kind '" + name + "' (expected binary or continuous)");
}

std::size_t EncoderConfig::receptive_field() const {
    std::size_t field = 1;
    for (auto k : kernels) field += dilation * (k > 0 ? k - 1 : 0);
    return field;
}

std::size_t TgconvConfig::receptive_field() const {
    std::size_t field = 1;
    for (auto d : dilations) field += d * (kernel > 0 ? kernel - 1 : 0);
    return field;
}

void ModelConfig::validate() const {
    if (num_variables == 0 || input_steps == 0 || horizon == 0) {
        throw ConfigError("model: num_variables, input_steps and horizon must be positive");
    }
    if (input_steps < encoder.receptive_field()) {
        throw ConfigError("model: input_steps " + std::to_string(input_steps) + " below encoder receptive field " +
                          std::to_string(encoder.receptive_field()));
    }
    if (tgconv.channels.empty() || tgconv.channels.size() != tgconv.dilations.size()) {
        throw ConfigError("model: tgconv channels and dilations must be non-empty and equally long");
    }
    if (std::any_of(tgconv.dilations.begin(), tgconv.dilations.end(), [](auto d) { return d == 0; })) {
        throw ConfigError("model: tgconv dilations must be >= 1");
    }
    if (tgconv.receptive_field() > input_steps) {
        throw ConfigError("model: tgconv receptive field " + std::to_string(tgconv.receptive_field()) +
                          " exceeds input_steps " + std::to_string(input_steps));
    }
    if (encoder.embedding_width == 0 || edge.hidden == 0) throw ConfigError("model: zero embedding or edge width");
}

SkiclModel::SkiclModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    encoder_ = std::make_unique<NodeEncoder>(config_.encoder, config_.input_steps, rng);
    edges_ = std::make_unique<EdgeGenerator>(config_.edge_kind, config_.encoder.embedding_width, config_.edge, rng);
    forecaster_ = std::make_unique<Forecaster>(config_.tgconv, config_.input_steps, config_.horizon, rng);
    encoder_->collect(params_, buffers_, "encoder.");
    edges_->collect(params_, "edge.");
    forecaster_->collect(params_, "forecaster.");
}

ModelOutput SkiclModel::forward(const Tensor& windows, bool training) {
    if (windows.dim() != 3 || windows.extent(1) != config_.num_variables || windows.extent(2) != config_.input_steps) {
        throw std::invalid_argument("model: windows of shape " + shape_to_string(windows.shape()) +
                                    " do not match the model's [B, " + std::to_string(config_.num_variables) + ", " +
                                    std::to_string(config_.input_steps) + "]");
    }
    ModelOutput out;
    out.embeddings = encoder_->forward(windows, training);
    out.adjacency = edges_->forward(out.embeddings);
    out.prediction = forecaster_->forward(windows, out.adjacency);
    return out;
}

std::size_t SkiclModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

ParameterList SkiclModel::all_state() const {
    ParameterList all = params_;
    all.insert(all.end(), buffers_.begin(), buffers_.end());
    return all;
}

std::vector<std::vector<double>> SkiclModel::snapshot() const {
    std::vector<std::vector<double>> state;
    for (const auto& p : all_state()) state.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    return state;
}

void SkiclModel::restore(const std::vector<std::vector<double>>& state) {
    const auto all = all_state();
    if (state.size() != all.size()) throw std::invalid_argument("model restore: state size mismatch");
    for (std::size_t k = 0; k < all.size(); ++k) {
        Tensor t = all[k].tensor;
        if (state[k].size() != t.numel()) throw std::invalid_argument("model restore: '" + all[k].name + "' size mismatch");
        std::copy(state[k].begin(), state[k].end(), t.mutable_values().begin());
    }
}

nlohmann::json SkiclModel::to_checkpoint() const {
    nlohmann::json doc = checkpoint_to_json(all_state());
    doc["model"] = model_config_to_json(config_);
    return doc;
}

std::unique_ptr<SkiclModel> SkiclModel::from_checkpoint(const nlohmann::json& doc) {
    if (!doc.contains("model")) throw std::runtime_error("checkpoint: missing model configuration");
    auto model = std::make_unique<SkiclModel>(model_config_from_json(doc.at("model")), 0);
    load_checkpoint_json(doc, model->all_state());
    return model;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"num_variables", c.num_variables},
            {"input_steps", c.input_steps},
            {"horizon", c.horizon},
            {"edge_kind", to_string(c.edge_kind)},
            {"encoder",
             {{"channels", c.encoder.channels},
              {"kernels", c.encoder.kernels},
              {"dilation", c.encoder.dilation},
              {"batch_norm", c.encoder.batch_norm},
              {"embedding_width", c.encoder.embedding_width}}},
            {"edge_hidden", c.edge.hidden},
            {"tgconv",
             {{"channels", c.tgconv.channels},
              {"kernel", c.tgconv.kernel},
              {"dilations", c.tgconv.dilations},
              {"residual_projection", c.tgconv.residual_projection}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
    reject_unknown_keys(doc,
                        {"num_variables", "input_steps", "horizon", "edge_kind", "encoder", "edge_hidden", "tgconv"},
                        "model");
    ModelConfig c;
    read_optional(doc, "num_variables", c.num_variables);
    read_optional(doc, "input_steps", c.input_steps);
    read_optional(doc, "horizon", c.horizon);
    if (doc.contains("edge_kind")) c.edge_kind = edge_kind_from_string(doc.at("edge_kind").get<std::string>());
    read_optional(doc, "edge_hidden", c.edge.hidden);
    if (doc.contains("encoder")) {
        const auto& e = doc.at("encoder");
        reject_unknown_keys(e, {"channels", "kernels", "dilation", "batch_norm", "embedding_width"}, "model.encoder");
        read_optional(e, "channels", c.encoder.channels);
        read_optional(e, "kernels", c.encoder.kernels);
        read_optional(e, "dilation", c.encoder.dilation);
        read_optional(e, "batch_norm", c.encoder.batch_norm);
        read_optional(e, "embedding_width", c.encoder.embedding_width);
    }
    if (doc.contains("tgconv")) {
        const auto& t = doc.at("tgconv");
        reject_unknown_keys(t, {"channels", "kernel", "dilations", "residual_projection"}, "model.tgconv");
        read_optional(t, "channels", c.tgconv.channels);
        read_optional(t, "kernel", c.tgconv.kernel);
        read_optional(t, "dilations", c.tgconv.dilations);
        read_optional(t, "residual_projection", c.tgconv.residual_projection);
    }
    return c;
}

}  // namespace skicl
