#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "evrel/commonsense.hpp"
#include "evrel/embedding.hpp"
#include "evrel/merp.hpp"
#include "evrel/pseudolabel.hpp"
#include "evrel/synthetic.hpp"

namespace evrel {

struct PipelinePaths {
  std::string corpus;
  std::string gold_labels;
  std::string frames;
  std::string text_hier;
  std::string kb;
  std::string pseudo_labels;
  std::string cs_checkpoint;
  std::string model_checkpoint;
  std::string train_log;
  std::string predictions;
  std::string report_csv;
  std::string report_table;
  std::string pred_corpus;  // IETe2Ve: corpus carrying predicted text events
};

struct PipelineConfig {
  PipelinePaths paths;
  EncoderConfig encoder;
  MerpConfig merp;
  CsConfig cs;
  SyntheticSpec synthetic;
  double lambda = 30.39;
  std::string conflict_policy = "identical-wins";
  bool multi_hop = false;
  std::string mode = "te2ve";            // te2ve | iete2ve
  std::string eval_predictor = "model";  // model | mm | prior | file
  std::uint64_t seed = 0;
  bool seed_set = false;  // every stage requires an explicit seed
  int workers = 1;

  // All randomness flows from the single top-level seed through named
  // sub-streams, one per stage.
  std::uint64_t stage_seed(std::string_view stage) const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct FlagOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<double> prune_threshold;
  std::optional<std::string> mode;
  std::optional<int> workers;
};

void apply_overrides(PipelineConfig& config, const FlagOverrides& flags);

void cmd_gen_synthetic(const PipelineConfig& config);
void cmd_pseudo_label(const PipelineConfig& config);
void cmd_train_cs(const PipelineConfig& config);
void cmd_train(const PipelineConfig& config);
void cmd_eval(const PipelineConfig& config);
void cmd_report(const PipelineConfig& config);

// Runs a command and maps failures onto the documented exit codes:
// 0 success, 2 missing input, 3 data validation failure, 4 configuration
// error. Diagnostics go to stderr, one line each.
int run_cli_command(const std::function<void()>& command);

}  // namespace evrel
