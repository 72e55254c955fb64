#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <vector>

#include "skicl/forecast/forecaster.hpp"
#include "skicl/graph/graph_inference.hpp"
#include "skicl/model/config.hpp"

namespace skicl {

struct ModelOutput {
    Tensor embeddings;  // [B, N, h]
    Tensor adjacency;   // [B, N, N], one learned graph per window
    Tensor prediction;  // [B, N, tau']
};

/// Dynamic graph inference (encoder + edge generator) feeding a TGConv
/// forecaster. Every window gets its own adjacency.
class SkiclModel {
public:
    SkiclModel(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }

    ModelOutput forward(const Tensor& windows, bool training);

    NodeEncoder& encoder() { return *encoder_; }
    EdgeGenerator& edge_generator() { return *edges_; }
    Forecaster& forecaster() { return *forecaster_; }

    /// Trainable parameters in a stable order with stable names.
    const ParameterList& parameters() const { return params_; }
    /// Non-trainable state (batch-norm running statistics).
    const ParameterList& buffers() const { return buffers_; }
    std::size_t parameter_count() const;

    /// Values of every parameter and buffer, for early-stopping restore.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& state);

    /// Checkpoint document: {format_version, model, params}. Buffers are stored
    /// alongside the parameters under their own names.
    nlohmann::json to_checkpoint() const;
    static std::unique_ptr<SkiclModel> from_checkpoint(const nlohmann::json& doc);

private:
    ParameterList all_state() const;

    ModelConfig config_;
    std::unique_ptr<NodeEncoder> encoder_;
    std::unique_ptr<EdgeGenerator> edges_;
    std::unique_ptr<Forecaster> forecaster_;
    ParameterList params_;
    ParameterList buffers_;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Rejects unknown keys; missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace skicl
