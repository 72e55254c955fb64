#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "skicl/data/data.hpp"
#include "skicl/model/config.hpp"
#include "skicl/trainer/trainer.hpp"

namespace skicl::cli {

inline constexpr int kConfigFormatVersion = 1;
inline constexpr int kRunFormatVersion = 1;
inline constexpr int kMetricsFormatVersion = 1;

/// One experiment: where the regimes come from, the model, training and
/// replay settings, and the run directory.
struct ExperimentConfig {
    std::optional<SyntheticConfig> synthetic = SyntheticConfig{};  // exactly one of synthetic / regime_dirs
    std::vector<std::filesystem::path> regime_dirs;
    SplitRatios split;
    ModelConfig model;
    TrainerConfig trainer;
    ReplayConfig replay;
    std::filesystem::path output_dir = "runs/default";

    /// Every referenced path must exist; budget ratio in (0, 1].
    void validate() const;
    /// Sets the synthetic, model-init and training seeds together.
    void set_seed(std::uint64_t seed);
};

/// Relative regime directories resolve against `base` (the config file's directory).
ExperimentConfig experiment_from_json(const nlohmann::json& doc, const std::filesystem::path& base = {});
nlohmann::json experiment_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment(const std::filesystem::path& path);

nlohmann::json synthetic_to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_from_json(const nlohmann::json& doc);

/// Generated or loaded regimes in sequence order.
std::vector<RegimeData> load_regimes(const ExperimentConfig& config);

}  // namespace skicl::cli
