#include "cli/experiment.hpp"

#include <fstream>
#include <sstream>

#include "skicl/errors.hpp"
#include "skicl/json_keys.hpp"

namespace skicl::cli {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
    if (synthetic.has_value() == !regime_dirs.empty()) {
        throw ConfigError("data: give exactly one of 'synthetic' or 'regime_dirs'");
    }
    if (synthetic) {
        synthetic->validate();
        if (synthetic->num_variables != model.num_variables) {
            throw ConfigError("model.num_variables is " + std::to_string(model.num_variables) +
                              " but the synthetic data has " + std::to_string(synthetic->num_variables) + " variables");
        }
    }
    for (const auto& dir : regime_dirs) {
        if (!fs::is_directory(dir)) throw ConfigError("data.regime_dirs: no such directory: " + dir.string());
    }
    if (!(split.train > 0.0 && split.val >= 0.0 && split.train + split.val < 1.0)) {
        throw ConfigError("data.split: need train > 0, val >= 0 and train + val < 1");
    }
    if (!(replay.budget_ratio > 0.0 && replay.budget_ratio <= 1.0)) {
        throw ConfigError("replay.budget_ratio must lie in (0, 1]");
    }
    if (replay.modes.parts < 2) throw ConfigError("replay.parts must be at least 2");
    if (replay.modes.max_modes < 2) throw ConfigError("replay.max_modes must be at least 2");
    trainer.validate();
    if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
    trainer.seed = seed;
    if (synthetic) synthetic->seed = seed;
}

nlohmann::json synthetic_to_json(const SyntheticConfig& c) {
    return {{"num_variables", c.num_variables},     {"total_steps", c.total_steps},
            {"num_regimes", c.num_regimes},         {"noise_std", c.noise_std},
            {"sparsity", c.sparsity},               {"spectral_radius", c.spectral_radius},
            {"prior_threshold", c.prior_threshold}, {"train_fraction", c.train_fraction},
            {"burn_in", c.burn_in},                 {"seed", c.seed}};
}

SyntheticConfig synthetic_from_json(const nlohmann::json& doc) {
    reject_unknown_keys(doc,
                        {"num_variables", "total_steps", "num_regimes", "noise_std", "sparsity", "spectral_radius",
                         "prior_threshold", "train_fraction", "burn_in", "seed"},
                        "data.synthetic");
    SyntheticConfig c;
    read_optional(doc, "num_variables", c.num_variables);
    read_optional(doc, "total_steps", c.total_steps);
    read_optional(doc, "num_regimes", c.num_regimes);
    read_optional(doc, "noise_std", c.noise_std);
    read_optional(doc, "sparsity", c.sparsity);
    read_optional(doc, "spectral_radius", c.spectral_radius);
    read_optional(doc, "prior_threshold", c.prior_threshold);
    read_optional(doc, "train_fraction", c.train_fraction);
    read_optional(doc, "burn_in", c.burn_in);
    read_optional(doc, "seed", c.seed);
    return c;
}

namespace {

nlohmann::json trainer_to_json(const TrainerConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"early_stopping", c.early_stopping},
            {"patience", c.patience},
            {"alpha", c.alpha},
            {"lambda", c.lambda},
            {"learning_rate", c.learning_rate},
            {"lr_decay", c.lr_decay},
            {"lr_decay_every", c.lr_decay_every},
            {"graph_threshold", c.graph_threshold},
            {"seed", c.seed}};
}

TrainerConfig trainer_from_json(const nlohmann::json& doc) {
    reject_unknown_keys(doc,
                        {"epochs", "batch_size", "early_stopping", "patience", "alpha", "lambda", "learning_rate",
                         "lr_decay", "lr_decay_every", "graph_threshold", "seed"},
                        "trainer");
    TrainerConfig c;
    read_optional(doc, "epochs", c.epochs);
    read_optional(doc, "batch_size", c.batch_size);
    read_optional(doc, "early_stopping", c.early_stopping);
    read_optional(doc, "patience", c.patience);
    read_optional(doc, "alpha", c.alpha);
    read_optional(doc, "lambda", c.lambda);
    read_optional(doc, "learning_rate", c.learning_rate);
    read_optional(doc, "lr_decay", c.lr_decay);
    read_optional(doc, "lr_decay_every", c.lr_decay_every);
    read_optional(doc, "graph_threshold", c.graph_threshold);
    read_optional(doc, "seed", c.seed);
    return c;
}

nlohmann::json replay_to_json(const ReplayConfig& c) {
    nlohmann::json doc{{"selector", to_string(c.selector)},
                       {"budget_ratio", c.budget_ratio},
                       {"parts", c.modes.parts},
                       {"max_modes", c.modes.max_modes},
                       {"min_size", c.modes.min_size},
                       {"max_size", nullptr}};
    if (c.modes.max_size) doc["max_size"] = *c.modes.max_size;
    return doc;
}

ReplayConfig replay_from_json(const nlohmann::json& doc) {
    reject_unknown_keys(doc, {"selector", "budget_ratio", "parts", "max_modes", "min_size", "max_size"}, "replay");
    ReplayConfig c;
    if (doc.contains("selector")) c.selector = selector_from_string(doc.at("selector").get<std::string>());
    read_optional(doc, "budget_ratio", c.budget_ratio);
    read_optional(doc, "parts", c.modes.parts);
    read_optional(doc, "max_modes", c.modes.max_modes);
    read_optional(doc, "min_size", c.modes.min_size);
    if (doc.contains("max_size") && !doc.at("max_size").is_null()) c.modes.max_size = doc.at("max_size").get<std::size_t>();
    return c;
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& doc, const fs::path& base) {
    reject_unknown_keys(doc, {"format_version", "data", "model", "trainer", "replay", "output_dir"}, "config");
    if (doc.contains("format_version") && doc.at("format_version").get<int>() != kConfigFormatVersion) {
        throw ConfigError("config: unsupported format_version");
    }
    ExperimentConfig c;
    c.synthetic.reset();
    try {
        bool synthetic_default = true;
        if (doc.contains("data")) {
            const auto& d = doc.at("data");
            reject_unknown_keys(d, {"synthetic", "regime_dirs", "split"}, "data");
            if (d.contains("regime_dirs")) {
                synthetic_default = false;
                for (const auto& p : d.at("regime_dirs")) {
                    fs::path dir = p.get<std::string>();
                    c.regime_dirs.push_back(fs::absolute(dir.is_relative() && !base.empty() ? base / dir : dir).lexically_normal());
                }
            }
            if (d.contains("synthetic")) c.synthetic = synthetic_from_json(d.at("synthetic"));
            if (d.contains("split")) {
                reject_unknown_keys(d.at("split"), {"train", "val"}, "data.split");
                read_optional(d.at("split"), "train", c.split.train);
                read_optional(d.at("split"), "val", c.split.val);
            }
        }
        if (synthetic_default && !c.synthetic) c.synthetic = SyntheticConfig{};
        if (doc.contains("model")) c.model = model_config_from_json(doc.at("model"));
        if (doc.contains("trainer")) c.trainer = trainer_from_json(doc.at("trainer"));
        if (doc.contains("replay")) c.replay = replay_from_json(doc.at("replay"));
        if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

nlohmann::json experiment_to_json(const ExperimentConfig& c) {
    nlohmann::json data{{"split", {{"train", c.split.train}, {"val", c.split.val}}}};
    if (c.synthetic) data["synthetic"] = synthetic_to_json(*c.synthetic);
    if (!c.regime_dirs.empty()) {
        data["regime_dirs"] = nlohmann::json::array();
        for (const auto& d : c.regime_dirs) data["regime_dirs"].push_back(d.string());
    }
    return {{"format_version", kConfigFormatVersion},
            {"data", data},
            {"model", model_config_to_json(c.model)},
            {"trainer", trainer_to_json(c.trainer)},
            {"replay", replay_to_json(c.replay)},
            {"output_dir", c.output_dir.string()}};
}

ExperimentConfig load_experiment(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return experiment_from_json(doc, path.parent_path());
}

std::vector<RegimeData> load_regimes(const ExperimentConfig& config) {
    if (config.synthetic) return generate_synthetic(*config.synthetic);
    std::vector<RegimeData> regimes;
    for (const auto& dir : config.regime_dirs) regimes.push_back(load_regime_csv(dir));
    return regimes;
}

}  // namespace skicl::cli
