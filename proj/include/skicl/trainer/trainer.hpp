#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "skicl/data/data.hpp"
#include "skicl/metrics/metrics.hpp"
#include "skicl/model/model.hpp"
#include "skicl/replay/replay.hpp"

namespace skicl {

struct TrainerConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    bool early_stopping = true;
    std::size_t patience = 10;
    double alpha = 1.0;   // memory loss weight
    double lambda = 1.0;  // consistency weight
    double learning_rate = 1e-4;
    double lr_decay = 0.8;
    std::size_t lr_decay_every = 20;
    double graph_threshold = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ReplayConfig {
    Selector selector = Selector::ski_cl;
    double budget_ratio = 0.01;
    ModeSearchOptions modes;
};

/// Batch means over one epoch plus the validation MAE after it.
struct EpochLog {
    int regime = 0;
    std::size_t epoch = 0;
    double forecast_loss = 0.0;
    double graph_loss = 0.0;
    double memory_loss = 0.0;
    double learning_rate = 0.0;
    double val_mae = 0.0;
};

struct RegimeReport {
    int regime = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
    std::vector<EpochLog> epochs;
};

struct RegimeEvaluation {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> precision;  // binary priors only: mean over windows
    std::optional<double> recall;
    std::size_t undefined_precision = 0;  // windows with no predicted edge
    std::size_t undefined_recall = 0;
    std::vector<std::size_t> window_ids;
    std::vector<PrecisionRecall> per_window;
    std::vector<Eigen::MatrixXd> graphs;  // learned adjacency per test window
    Eigen::MatrixXd mean_graph;
};

/// Test-split scores of the model on one regime. Pure in the model and data:
/// batch-norm runs on stored statistics and no memory is consulted.
RegimeEvaluation evaluate_regime(SkiclModel& model, const RegimeDataset& regime, double graph_threshold = 0.5,
                                 std::size_t batch = 64);

/// MAE on an arbitrary window set, evaluation mode.
double evaluate_mae(SkiclModel& model, const WindowSet& windows, std::size_t batch = 64);

/// One regime of training on L_current + alpha * L_memory with fresh Adam state
/// and learning-rate schedule. Memory batches pair each window with its own
/// regime's prior.
RegimeReport train_regime(SkiclModel& model, const RegimeDataset& regime, const MemoryBuffer& memory,
                          const TrainerConfig& config, const std::function<void(const EpochLog&)>& on_epoch = {});

/// Memory entry for a finished regime using the configured selector.
MemoryEntry build_memory_entry(SkiclModel& model, const RegimeDataset& regime, const ReplayConfig& replay,
                               std::uint64_t seed);

struct SequenceObserver {
    std::function<void(const EpochLog&)> on_epoch;
    std::function<void(const RegimeReport&)> on_regime_trained;
    std::function<void(std::size_t trained, std::size_t evaluated, const RegimeEvaluation&)> on_evaluation;
    /// Called after memory was updated for regime i (1-based).
    std::function<void(std::size_t regime, SkiclModel&, const MemoryBuffer&)> on_regime_done;
};

struct SequenceResult {
    std::map<Metric, PerformanceMatrix> matrices;
    MemoryBuffer memory;
    std::vector<RegimeReport> reports;
};

/// Trains regimes in order, filling row i of every performance matrix after
/// regime i. Precision and recall are tracked only when every prior is binary.
SequenceResult run_sequence(SkiclModel& model, const std::vector<RegimeDataset>& regimes, const TrainerConfig& config,
                            const ReplayConfig& replay, const SequenceObserver& observer = {});

/// {regime_i: {metric: {AP, AF}}} with AF null for the first regime.
nlohmann::json summarize(const std::map<Metric, PerformanceMatrix>& matrices);

}  // namespace skicl
