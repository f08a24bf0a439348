#include <CLI11.hpp>
#include <functional>
#include <optional>
#include <string>

#include "evrel/pipeline.hpp"

namespace {

struct CliState {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<double> prune_threshold;
  std::optional<std::string> mode;
  std::optional<int> workers;
};

void add_shared_flags(CLI::App* cmd, CliState& state) {
  cmd->add_option("--config", state.config_path, "pipeline configuration file (JSON)")
      ->required();
  cmd->add_option("--seed", state.seed, "top-level seed (overrides config)");
  cmd->add_option("--lambda", state.lambda, "retrieval threshold (overrides config)");
  cmd->add_option("--prune-threshold", state.prune_threshold,
                  "Identical-pruning threshold (overrides config)");
  cmd->add_option("--mode", state.mode, "evaluation mode: te2ve or iete2ve");
  cmd->add_option("--workers", state.workers, "per-document parallelism (default 1)");
}

evrel::PipelineConfig resolve_config(const CliState& state) {
  auto config = evrel::load_pipeline_config(state.config_path);
  evrel::FlagOverrides flags;
  flags.seed = state.seed;
  flags.lambda = state.lambda;
  flags.prune_threshold = state.prune_threshold;
  flags.mode = state.mode;
  flags.workers = state.workers;
  evrel::apply_overrides(config, flags);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised text-video event relation pipeline"};
  app.require_subcommand(1);

  CliState state;
  std::function<void(const evrel::PipelineConfig&)> selected;

  const auto add_command = [&](const std::string& name, const std::string& help,
                               void (*fn)(const evrel::PipelineConfig&)) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_shared_flags(cmd, state);
    cmd->callback([&selected, fn]() { selected = fn; });
  };

  add_command("gen-synthetic", "generate a synthetic corpus with planted relations",
              evrel::cmd_gen_synthetic);
  add_command("pseudo-label", "generate pseudo labels from retrieval and transitivity",
              evrel::cmd_pseudo_label);
  add_command("train-cs", "train the commonsense feature extractor on KB pairs",
              evrel::cmd_train_cs);
  add_command("train", "train the relation classifier on pseudo labels",
              evrel::cmd_train);
  add_command("eval", "run inference and score predictions against gold labels",
              evrel::cmd_eval);
  add_command("report", "render metric reports as a fixed-width table",
              evrel::cmd_report);

  CLI11_PARSE(app, argc, argv);

  return evrel::run_cli_command([&]() {
    const auto config = resolve_config(state);
    selected(config);
  });
}
