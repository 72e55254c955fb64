#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "cli/experiment.hpp"

namespace skicl::cli {

/// Command-line values; anything set here overrides the config file.
struct CommandOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> checkpoint;
    std::vector<std::filesystem::path> regimes;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> selector;
    std::optional<double> budget;
    std::optional<double> lambda;
    std::optional<double> alpha;
    std::optional<std::size_t> epochs;
    int regime_id = 1;  // replay-select: id used to derive the selector's random stream
    bool dump_graphs = false;
    bool quiet = false;  // train: no per-epoch lines on stdout
};

/// Config file (or defaults) with the overrides applied and validated.
ExperimentConfig resolve_experiment(const CommandOptions& options);

/// Writes one directory per regime under the output directory. Returns them in order.
std::vector<std::filesystem::path> cmd_generate(const CommandOptions& options);

struct TrainOutcome {
    std::filesystem::path run_dir;
    nlohmann::json summary;
};

/// Full sequential run. On a mid-run error the run directory gets a FAILED
/// file naming the regime, and the error propagates.
TrainOutcome cmd_train(const CommandOptions& options);
TrainOutcome run_experiment(const ExperimentConfig& config, bool dump_graphs, bool quiet);

/// Scores a checkpoint on the given regime directories (in sequence order).
/// Reads nothing but the checkpoint, the regimes and the optional config.
nlohmann::json cmd_evaluate(const CommandOptions& options);

/// Runs the configured selector on one regime's training windows.
nlohmann::json cmd_replay_select(const CommandOptions& options);

}  // namespace skicl::cli
