#include <CLI11.hpp>
#include <iostream>

#include "cli/commands.hpp"

using skicl::cli::CommandOptions;

namespace {

void add_experiment_flags(CLI::App* cmd, CommandOptions& o) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--seed", o.seed, "Seed for data generation, model init and training");
}

void add_training_flags(CLI::App* cmd, CommandOptions& o) {
    cmd->add_option("--selector", o.selector, "Replay selector")->check(CLI::IsMember({"ski-cl", "er", "none"}));
    cmd->add_option("--budget", o.budget, "Memory budget as a fraction of each regime's training windows");
    cmd->add_option("--lambda", o.lambda, "Consistency weight");
    cmd->add_option("--alpha", o.alpha, "Memory loss weight");
    cmd->add_option("--epochs", o.epochs, "Epochs per regime");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structural-knowledge-informed continual learning for multivariate time series"};
    app.require_subcommand(1);
    CommandOptions o;

    auto* generate = app.add_subcommand("generate", "Write synthetic regime directories");
    add_experiment_flags(generate, o);

    auto* train = app.add_subcommand("train", "Train sequentially over the regimes and write a run directory");
    add_experiment_flags(train, o);
    add_training_flags(train, o);
    train->add_flag("--dump-graphs", o.dump_graphs, "Also write per-window learned graphs");
    train->add_flag("--quiet", o.quiet, "Do not echo epoch lines");

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on regime directories");
    evaluate->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--regimes", o.regimes, "Regime directories in sequence order")->check(CLI::ExistingDirectory);
    evaluate->add_option("--config", o.config, "Config for split ratios, threshold and (without --regimes) data")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--out", o.out, "Output directory")->required();
    evaluate->add_flag("--dump-graphs", o.dump_graphs, "Write mean and per-window learned graphs");

    auto* select = app.add_subcommand("replay-select", "Run the replay selector on one regime");
    select->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    select->add_option("--regimes", o.regimes, "One regime directory")->required()->check(CLI::ExistingDirectory);
    select->add_option("--regime-id", o.regime_id, "Regime position in the sequence");
    add_experiment_flags(select, o);
    add_training_flags(select, o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            for (const auto& dir : skicl::cli::cmd_generate(o)) std::cout << dir.string() << '\n';
        } else if (train->parsed()) {
            const auto outcome = skicl::cli::cmd_train(o);
            std::cout << outcome.summary.dump(2) << '\n' << "run directory: " << outcome.run_dir.string() << '\n';
        } else if (evaluate->parsed()) {
            std::cout << skicl::cli::cmd_evaluate(o).dump(2) << '\n';
        } else if (select->parsed()) {
            std::cout << skicl::cli::cmd_replay_select(o).dump(2) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
