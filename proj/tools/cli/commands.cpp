#include "cli/commands.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "skicl/errors.hpp"
#include "skicl/tensor/checkpoint.hpp"

namespace skicl::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    try {
        return nlohmann::json::parse(text.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::string regime_label(std::size_t id) { return "regime_" + std::to_string(id); }

std::string epoch_line(const EpochLog& log) {
    std::ostringstream line;
    line << std::setprecision(6) << "regime=" << log.regime << " epoch=" << log.epoch + 1 << " L_F=" << log.forecast_loss
         << " L_G=" << log.graph_loss << " L_memory=" << log.memory_loss << " lr=" << log.learning_rate
         << " val_mae=" << log.val_mae;
    return line.str();
}

nlohmann::json evaluation_to_json(const RegimeDataset& regime, const RegimeEvaluation& eval) {
    nlohmann::json doc{{"id", regime.id},
                       {"name", regime.name},
                       {"test_windows", regime.test.size()},
                       {"mae", eval.mae},
                       {"rmse", eval.rmse},
                       {"precision", nullptr},
                       {"recall", nullptr}};
    if (eval.precision) {
        doc["precision"] = *eval.precision;
        doc["recall"] = *eval.recall;
        doc["undefined_precision"] = eval.undefined_precision;
        doc["undefined_recall"] = eval.undefined_recall;
    }
    return doc;
}

void append_similarity_rows(std::ostringstream& csv, const std::string& prefix, const RegimeEvaluation& eval) {
    csv << std::setprecision(17);
    for (std::size_t w = 0; w < eval.per_window.size(); ++w) {
        const auto& pr = eval.per_window[w];
        csv << prefix << eval.window_ids[w] << ',' << pr.precision << ',' << pr.recall << ','
            << (pr.precision_defined ? 1 : 0) << ',' << (pr.recall_defined ? 1 : 0) << '\n';
    }
}

void write_graphs(const fs::path& dir, const std::string& name, const RegimeEvaluation& eval, bool per_window) {
    write_text(dir / (name + "_mean.csv"), matrix_to_csv(eval.mean_graph));
    if (!per_window) return;
    std::ostringstream csv;
    csv << std::setprecision(17) << "window_id,row,col,value\n";
    for (std::size_t w = 0; w < eval.graphs.size(); ++w) {
        const auto& g = eval.graphs[w];
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            for (Eigen::Index j = 0; j < g.cols(); ++j) csv << eval.window_ids[w] << ',' << i << ',' << j << ',' << g(i, j) << '\n';
    }
    write_text(dir / (name + "_windows.csv"), csv.str());
}

std::vector<RegimeDataset> prepare_all(const std::vector<RegimeData>& raw, const ModelConfig& model,
                                       const SplitRatios& split) {
    std::vector<RegimeDataset> out;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        raw[k].validate();
        if (raw[k].num_variables() != model.num_variables) {
            throw ConfigError(raw[k].name + ": has " + std::to_string(raw[k].num_variables()) +
                              " variables, the model expects " + std::to_string(model.num_variables));
        }
        if (raw[k].structure.kind != model.edge_kind) {
            throw ConfigError(raw[k].name + ": prior is " + to_string(raw[k].structure.kind) + " but the model learns " +
                              to_string(model.edge_kind) + " edges");
        }
        out.push_back(prepare_regime(raw[k], static_cast<int>(k + 1), model.input_steps, model.horizon, split));
    }
    return out;
}

nlohmann::json run_info(const std::string& command) {
    return {{"format_version", kRunFormatVersion},
            {"program", "skicl"},
            {"command", command},
            {"formats",
             {{"config", kConfigFormatVersion},
              {"checkpoint", kCheckpointFormatVersion},
              {"manifest", kManifestFormatVersion},
              {"regime", kRegimeFormatVersion},
              {"metrics", kMetricsFormatVersion}}}};
}

const char* kSimilarityHeader = "window_id,precision,recall,precision_defined,recall_defined\n";

}  // namespace

ExperimentConfig resolve_experiment(const CommandOptions& o) {
    ExperimentConfig c = o.config ? load_experiment(*o.config) : ExperimentConfig{};
    if (o.seed) c.set_seed(*o.seed);
    if (o.selector) c.replay.selector = selector_from_string(*o.selector);
    if (o.budget) c.replay.budget_ratio = *o.budget;
    if (o.lambda) c.trainer.lambda = *o.lambda;
    if (o.alpha) c.trainer.alpha = *o.alpha;
    if (o.epochs) c.trainer.epochs = *o.epochs;
    if (o.out) c.output_dir = *o.out;
    c.validate();
    return c;
}

std::vector<fs::path> cmd_generate(const CommandOptions& options) {
    const ExperimentConfig config = resolve_experiment(options);
    if (!config.synthetic) throw ConfigError("generate: the config names regime directories, not a synthetic source");
    const auto regimes = generate_synthetic(*config.synthetic);
    fs::create_directories(config.output_dir);
    write_json(config.output_dir / "synthetic.json", synthetic_to_json(*config.synthetic));
    std::vector<fs::path> dirs;
    for (const auto& regime : regimes) {
        const fs::path dir = config.output_dir / regime.name;
        for (const auto& [file, text] : serialize_regime(regime)) write_text(dir / file, text);
        dirs.push_back(dir);
    }
    return dirs;
}

TrainOutcome cmd_train(const CommandOptions& options) {
    return run_experiment(resolve_experiment(options), options.dump_graphs, options.quiet);
}

TrainOutcome run_experiment(const ExperimentConfig& config, bool dump_graphs, bool quiet) {
    const fs::path run = config.output_dir;
    fs::create_directories(run);
    fs::remove(run / "FAILED");
    write_json(run / "config.json", experiment_to_json(config));
    write_json(run / "run_info.json", run_info("train"));

    const auto raw = load_regimes(config);
    const auto regimes = prepare_all(raw, config.model, config.split);
    for (std::size_t k = 0; k < raw.size(); ++k) {
        for (const auto& [file, text] : serialize_regime(raw[k])) write_text(run / "data" / regime_label(k + 1) / file, text);
    }

    std::ofstream log(run / "train.log", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (run / "train.log").string());
    std::ostringstream similarity;
    similarity << "trained_through,regime," << kSimilarityHeader;

    SkiclModel model(config.model, config.trainer.seed);
    std::size_t current = 1;
    SequenceObserver observer;
    observer.on_epoch = [&](const EpochLog& e) {
        const std::string line = epoch_line(e);
        log << line << '\n' << std::flush;
        if (!quiet) std::cout << line << '\n' << std::flush;
    };
    observer.on_regime_trained = [&](const RegimeReport& report) {
        nlohmann::json doc = model.to_checkpoint();
        doc["regime"] = report.regime;
        doc["regime_name"] = regimes[current - 1].name;
        doc["best_epoch"] = report.best_epoch + 1;
        write_json(run / "checkpoints" / (regime_label(current) + ".json"), doc);
    };
    observer.on_evaluation = [&](std::size_t i, std::size_t j, const RegimeEvaluation& eval) {
        write_graphs(run / "graphs" / ("after_" + regime_label(i)), regime_label(j), eval, dump_graphs);
        if (eval.precision) append_similarity_rows(similarity, std::to_string(i) + "," + std::to_string(j) + ",", eval);
    };
    observer.on_regime_done = [&](std::size_t i, SkiclModel&, const MemoryBuffer& memory) {
        write_json(run / "replay" / "manifest.json", memory.manifest(config.replay.selector));
        for (const auto& entry : memory.entries()) {
            const fs::path file = run / "replay" / ("structure_regime_" + std::to_string(entry.regime_id) + ".csv");
            if (!fs::exists(file)) write_text(file, matrix_to_csv(entry.structure.adjacency));
        }
        current = i + 1;
    };

    SequenceResult result;
    try {
        result = run_sequence(model, regimes, config.trainer, config.replay, observer);
    } catch (const std::exception& e) {
        const std::string name = current <= regimes.size() ? regimes[current - 1].name : "after the last regime";
        write_text(run / "FAILED", regime_label(current) + " (" + name + "): " + e.what() + "\n");
        throw;
    }

    for (const auto& [metric, p] : result.matrices) write_text(run / ("performance_matrix_" + to_string(metric) + ".csv"), p.to_csv());
    TrainOutcome outcome{run, summarize(result.matrices)};
    write_json(run / "summary.json", outcome.summary);
    if (result.matrices.count(Metric::precision)) write_text(run / "structure_similarity.csv", similarity.str());
    return outcome;
}

nlohmann::json cmd_evaluate(const CommandOptions& options) {
    if (!options.checkpoint) throw ConfigError("evaluate: --checkpoint is required");
    if (!options.out) throw ConfigError("evaluate: --out is required");
    if (options.regimes.empty() && !options.config) throw ConfigError("evaluate: give --regimes or --config");

    SplitRatios split;
    double threshold = TrainerConfig{}.graph_threshold;
    std::vector<RegimeData> raw;
    if (options.config) {
        CommandOptions config_only;
        config_only.config = options.config;
        const ExperimentConfig config = resolve_experiment(config_only);
        split = config.split;
        threshold = config.trainer.graph_threshold;
        if (options.regimes.empty()) raw = load_regimes(config);
    }
    for (const auto& dir : options.regimes) raw.push_back(load_regime_csv(dir));

    const auto model = SkiclModel::from_checkpoint(read_json(*options.checkpoint));
    const auto regimes = prepare_all(raw, model->config(), split);

    const fs::path out = *options.out;
    fs::create_directories(out);
    nlohmann::json doc{{"format_version", kMetricsFormatVersion}, {"regimes", nlohmann::json::array()}};
    std::ostringstream similarity;
    similarity << "regime," << kSimilarityHeader;
    bool binary = true;
    for (const auto& regime : regimes) {
        const RegimeEvaluation eval = evaluate_regime(*model, regime, threshold);
        doc["regimes"].push_back(evaluation_to_json(regime, eval));
        if (eval.precision) {
            append_similarity_rows(similarity, std::to_string(regime.id) + ",", eval);
        } else {
            binary = false;
        }
        if (options.dump_graphs) write_graphs(out / "graphs", regime_label(static_cast<std::size_t>(regime.id)), eval, true);
    }
    write_json(out / "metrics.json", doc);
    if (binary) write_text(out / "structure_similarity.csv", similarity.str());
    return doc;
}

nlohmann::json cmd_replay_select(const CommandOptions& options) {
    if (!options.checkpoint) throw ConfigError("replay-select: --checkpoint is required");
    if (!options.out) throw ConfigError("replay-select: --out is required");
    if (options.regimes.size() != 1) throw ConfigError("replay-select: give exactly one directory with --regimes");
    if (options.regime_id < 1) throw ConfigError("replay-select: --regime-id must be positive");
    CommandOptions config_options = options;
    config_options.out.reset();
    const ExperimentConfig config = resolve_experiment(config_options);
    if (config.replay.selector == Selector::none) throw ConfigError("replay-select: selector 'none' selects nothing");

    const auto model = SkiclModel::from_checkpoint(read_json(*options.checkpoint));
    RegimeDataset regime = prepare_all({load_regime_csv(options.regimes.front())}, model->config(), config.split).front();
    regime.id = options.regime_id;

    const MemoryEntry entry = build_memory_entry(*model, regime, config.replay, config.trainer.seed);
    nlohmann::json doc{{"format_version", kManifestFormatVersion},
                       {"selector", to_string(config.replay.selector)},
                       {"regime_id", regime.id},
                       {"regime_name", regime.name},
                       {"train_windows", regime.train.size()},
                       {"budget", entry.budget},
                       {"rows", entry.rows},
                       {"window_ids", entry.windows.starts}};
    if (config.replay.selector == Selector::ski_cl) {
        const ModeSearchResult modes = characterize_modes(build_representations(*model, regime.train), config.replay.modes);
        doc["modes"] = {{"boundaries", modes.split.boundaries},
                        {"fallback", modes.split.fallback},
                        {"objective", modes.objective},
                        {"greedy_cuts", modes.greedy_cuts}};
    }
    write_json(*options.out / "selection.json", doc);
    write_text(*options.out / ("structure_regime_" + std::to_string(regime.id) + ".csv"),
               matrix_to_csv(regime.structure.adjacency));
    return doc;
}

}  // namespace skicl::cli
