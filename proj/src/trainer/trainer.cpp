#include "skicl/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "skicl/consistency.hpp"
#include "skicl/errors.hpp"
#include "skicl/graph/graph_inference.hpp"
#include "skicl/log.hpp"
#include "skicl/tensor/optim.hpp"

namespace skicl {

namespace {

enum class Stream : std::uint64_t { shuffle = 1, memory = 2, er = 3 };

std::uint64_t stream_seed(std::uint64_t seed, int regime, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(regime), static_cast<std::uint32_t>(stream)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Pooled view over every stored window, remembering which entry it came from.
struct MemoryPool {
    WindowSet windows;
    std::vector<std::size_t> owner;
    std::vector<const StructuralKnowledge*> priors;
};

MemoryPool pool_memory(const MemoryBuffer& memory) {
    MemoryPool pool;
    for (const auto& entry : memory.entries()) {
        pool.windows.append(entry.windows);
        pool.owner.insert(pool.owner.end(), entry.windows.size(), pool.priors.size());
        pool.priors.push_back(&entry.structure);
    }
    return pool;
}

Tensor memory_consistency(const Tensor& adjacency, EdgeKind kind, const MemoryPool& pool,
                          const std::vector<std::size_t>& rows) {
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t b = 0; b < rows.size(); ++b) groups[pool.owner[rows[b]]].push_back(b);
    Tensor total;
    for (const auto& [owner, members] : groups) {
        const Tensor part = consistency_loss(select_rows(adjacency, members), kind, *pool.priors[owner]);
        const Tensor weighted = scale(part, static_cast<double>(members.size()) / static_cast<double>(rows.size()));
        total = total.defined() ? add(total, weighted) : weighted;
    }
    return total;
}

std::vector<std::size_t> range_rows(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    return rows;
}

}  // namespace

void TrainerConfig::validate() const {
    if (epochs == 0) throw ConfigError("trainer: epochs must be positive");
    if (batch_size == 0) throw ConfigError("trainer: batch_size must be positive");
    if (!(alpha >= 0.0)) throw ConfigError("trainer: alpha must be non-negative");
    if (!(lambda >= 0.0)) throw ConfigError("trainer: lambda must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("trainer: learning_rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("trainer: lr_decay must lie in (0, 1]");
    if (lr_decay_every == 0) throw ConfigError("trainer: lr_decay_every must be positive");
    if (early_stopping && patience == 0) throw ConfigError("trainer: patience must be positive");
    if (!(graph_threshold > 0.0 && graph_threshold < 1.0)) throw ConfigError("trainer: graph_threshold must lie in (0, 1)");
}

double evaluate_mae(SkiclModel& model, const WindowSet& windows, std::size_t batch) {
    NoGradGuard guard;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < windows.size(); start += batch) {
        const auto rows = range_rows(start, std::min(start + batch, windows.size()));
        const Tensor pred = model.forward(windows.input_batch(rows), false).prediction;
        const Tensor target = windows.target_batch(rows);
        for (std::size_t k = 0; k < pred.numel(); ++k) total += std::abs(pred.values()[k] - target.values()[k]);
        count += pred.numel();
    }
    if (count == 0) throw std::invalid_argument("evaluate: no windows");
    return total / static_cast<double>(count);
}

RegimeEvaluation evaluate_regime(SkiclModel& model, const RegimeDataset& regime, double graph_threshold,
                                 std::size_t batch) {
    const WindowSet& windows = regime.test;
    if (windows.empty()) throw std::invalid_argument(regime.name + ": no test windows");
    if (windows.num_variables != model.config().num_variables || windows.input_steps != model.config().input_steps ||
        windows.horizon != model.config().horizon) {
        throw std::invalid_argument(regime.name + ": windows [N=" + std::to_string(windows.num_variables) +
                                    ", tau=" + std::to_string(windows.input_steps) + ", horizon=" +
                                    std::to_string(windows.horizon) + "] do not match the model");
    }
    NoGradGuard guard;
    const std::size_t n = windows.num_variables;
    const bool binary = regime.structure.kind == EdgeKind::binary;
    RegimeEvaluation out;
    out.window_ids = windows.starts;
    std::vector<double> predictions, targets;
    out.mean_graph = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    double precision_sum = 0.0, recall_sum = 0.0;
    for (std::size_t start = 0; start < windows.size(); start += batch) {
        const auto rows = range_rows(start, std::min(start + batch, windows.size()));
        const ModelOutput result = model.forward(windows.input_batch(rows), false);
        const Tensor target = windows.target_batch(rows);
        predictions.insert(predictions.end(), result.prediction.values().begin(), result.prediction.values().end());
        targets.insert(targets.end(), target.values().begin(), target.values().end());
        auto av = result.adjacency.values();
        for (std::size_t b = 0; b < rows.size(); ++b) {
            Eigen::MatrixXd graph(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) graph(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = av[(b * n + i) * n + j];
            out.mean_graph += graph;
            if (binary) {
                const PrecisionRecall pr = precision_recall(binarize(graph, graph_threshold), regime.structure);
                out.undefined_precision += !pr.precision_defined;
                out.undefined_recall += !pr.recall_defined;
                precision_sum += pr.precision;
                recall_sum += pr.recall;
                out.per_window.push_back(pr);
            }
            out.graphs.push_back(std::move(graph));
        }
    }
    const auto count = static_cast<double>(windows.size());
    out.mean_graph /= count;
    out.mae = mae(targets, predictions);
    out.rmse = rmse(targets, predictions);
    if (binary) {
        out.precision = precision_sum / count;
        out.recall = recall_sum / count;
        if (out.undefined_precision > 0) {
            log_warning(regime.name + ": " + std::to_string(out.undefined_precision) +
                        " test windows predicted no edge; their precision counts as 0");
        }
        if (out.undefined_recall > 0) {
            log_warning(regime.name + ": prior has no observed off-diagonal edge; recall counts as 0");
        }
    }
    return out;
}

RegimeReport train_regime(SkiclModel& model, const RegimeDataset& regime, const MemoryBuffer& memory,
                          const TrainerConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    if (regime.train.empty()) throw ConfigError(regime.name + ": no training windows");
    const ModelConfig& mc = model.config();
    const EdgeKind kind = mc.edge_kind;
    if (regime.train.num_variables != mc.num_variables) {
        throw std::invalid_argument(regime.name + ": " + std::to_string(regime.train.num_variables) +
                                    " variables but the model expects " + std::to_string(mc.num_variables));
    }
    const MemoryPool pool = pool_memory(memory);
    if (!pool.windows.empty() && pool.windows.num_variables != mc.num_variables) {
        throw std::invalid_argument("memory windows have " + std::to_string(pool.windows.num_variables) +
                                    " variables but the model expects " + std::to_string(mc.num_variables));
    }
    const bool replay = config.alpha > 0.0 && !pool.windows.empty();

    Adam optimizer(model.parameters(), AdamOptions{config.learning_rate});
    const StepDecaySchedule schedule{config.learning_rate, config.lr_decay, config.lr_decay_every};
    std::mt19937_64 shuffle_rng(stream_seed(config.seed, regime.id, Stream::shuffle));
    std::mt19937_64 memory_rng(stream_seed(config.seed, regime.id, Stream::memory));
    std::uniform_int_distribution<std::size_t> memory_pick(0, replay ? pool.windows.size() - 1 : 0);

    RegimeReport report;
    report.regime = regime.id;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_state;
    std::size_t stale = 0;
    std::vector<std::size_t> order = range_rows(0, regime.train.size());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        optimizer.set_learning_rate(schedule.at(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochLog log;
        log.regime = regime.id;
        log.epoch = epoch;
        log.learning_rate = optimizer.learning_rate();
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::vector<std::size_t> rows(order.begin() + static_cast<long>(start),
                                                order.begin() + static_cast<long>(std::min(start + config.batch_size, order.size())));
            zero_grads(model.parameters());
            const ModelOutput out = model.forward(regime.train.input_batch(rows), true);
            const Tensor lf = forecasting_loss(out.prediction, regime.train.target_batch(rows));
            const Tensor lg = consistency_loss(out.adjacency, kind, regime.structure);
            Tensor loss = total_loss(lf, lg, config.lambda);
            log.forecast_loss += lf.item();
            log.graph_loss += lg.item();
            if (replay) {
                std::vector<std::size_t> picks(rows.size());
                for (auto& p : picks) p = memory_pick(memory_rng);
                const ModelOutput mem = model.forward(pool.windows.input_batch(picks), true);
                const Tensor mf = forecasting_loss(mem.prediction, pool.windows.target_batch(picks));
                const Tensor mg = memory_consistency(mem.adjacency, kind, pool, picks);
                const Tensor memory_loss = total_loss(mf, mg, config.lambda);
                log.memory_loss += memory_loss.item();
                loss = add(loss, scale(memory_loss, config.alpha));
            }
            backward(loss);
            optimizer.step();
            ++batches;
        }
        log.forecast_loss /= static_cast<double>(batches);
        log.graph_loss /= static_cast<double>(batches);
        log.memory_loss /= static_cast<double>(batches);
        log.val_mae = regime.val.empty() ? log.forecast_loss : evaluate_mae(model, regime.val);
        report.epochs.push_back(log);
        report.epochs_run = epoch + 1;
        if (on_epoch) on_epoch(log);

        if (log.val_mae < best) {
            best = log.val_mae;
            report.best_epoch = epoch;
            report.best_val_mae = best;
            if (config.early_stopping) best_state = model.snapshot();
            stale = 0;
        } else if (config.early_stopping && ++stale >= config.patience) {
            break;
        }
    }
    if (config.early_stopping && !best_state.empty()) model.restore(best_state);
    return report;
}

MemoryEntry build_memory_entry(SkiclModel& model, const RegimeDataset& regime, const ReplayConfig& replay,
                               std::uint64_t seed) {
    const std::size_t n = regime.train.size();
    MemoryEntry entry;
    entry.regime_id = regime.id;
    entry.regime_name = regime.name;
    entry.structure = regime.structure;
    entry.budget = memory_budget(n, replay.budget_ratio);
    switch (replay.selector) {
        case Selector::none:
            throw std::logic_error("memory entry requested for selector none");
        case Selector::er:
            entry.rows = random_select(n, entry.budget, stream_seed(seed, regime.id, Stream::er));
            break;
        case Selector::ski_cl: {
            const Eigen::MatrixXd reps = build_representations(model, regime.train);
            const ModeSearchResult modes = characterize_modes(reps, replay.modes);
            entry.rows = select_samples(reps, modes.split, entry.budget);
            break;
        }
    }
    entry.windows = regime.train.subset(entry.rows);
    return entry;
}

SequenceResult run_sequence(SkiclModel& model, const std::vector<RegimeDataset>& regimes, const TrainerConfig& config,
                            const ReplayConfig& replay, const SequenceObserver& observer) {
    config.validate();
    if (regimes.empty()) throw ConfigError("sequence: no regimes");
    const bool binary = std::all_of(regimes.begin(), regimes.end(),
                                    [](const RegimeDataset& r) { return r.structure.kind == EdgeKind::binary; });
    for (const auto& r : regimes) {
        if (r.train.empty()) throw ConfigError(r.name + ": no training windows");
        if (r.structure.kind != model.config().edge_kind) {
            throw ConfigError(r.name + ": prior is " + to_string(r.structure.kind) + " but the model learns " +
                              to_string(model.config().edge_kind) + " edges");
        }
    }
    SequenceResult result;
    const std::size_t s = regimes.size();
    for (Metric m : kAllMetrics) {
        if (binary || m == Metric::mae || m == Metric::rmse) result.matrices.emplace(m, PerformanceMatrix(s));
    }
    for (std::size_t i = 1; i <= s; ++i) {
        RegimeReport report = train_regime(model, regimes[i - 1], result.memory, config, observer.on_epoch);
        if (observer.on_regime_trained) observer.on_regime_trained(report);
        result.reports.push_back(std::move(report));
        for (std::size_t j = 1; j <= i; ++j) {
            const RegimeEvaluation eval = evaluate_regime(model, regimes[j - 1], config.graph_threshold);
            result.matrices.at(Metric::mae).set(i, j, eval.mae);
            result.matrices.at(Metric::rmse).set(i, j, eval.rmse);
            if (binary) {
                result.matrices.at(Metric::precision).set(i, j, *eval.precision);
                result.matrices.at(Metric::recall).set(i, j, *eval.recall);
            }
            if (observer.on_evaluation) observer.on_evaluation(i, j, eval);
        }
        if (replay.selector != Selector::none) {
            result.memory.add(build_memory_entry(model, regimes[i - 1], replay, config.seed));
        }
        if (observer.on_regime_done) observer.on_regime_done(i, model, result.memory);
    }
    return result;
}

nlohmann::json summarize(const std::map<Metric, PerformanceMatrix>& matrices) {
    nlohmann::json doc = nlohmann::json::object();
    if (matrices.empty()) return doc;
    const std::size_t s = matrices.begin()->second.regimes();
    for (std::size_t i = 1; i <= s; ++i) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [metric, p] : matrices) {
            nlohmann::json cell{{"AP", average_performance(p, i)}, {"AF", nullptr}};
            if (i >= 2) cell["AF"] = average_forgetting(p, i);
            row[to_string(metric)] = cell;
        }
        doc["regime_" + std::to_string(i)] = row;
    }
    return doc;
}

}  // namespace skicl
