#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "evrel/errors.hpp"
#include "evrel/evaluation.hpp"
#include "evrel/pipeline.hpp"
#include "test_support.hpp"

using namespace evrel;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = EVREL_FIXTURE_DIR;
const std::string kCliBin = EVREL_CLI_BIN;

nlohmann::json base_config(const fs::path& dir) {
  nlohmann::json j;
  j["seed"] = 404;
  j["lambda"] = 30.39;
  j["paths"] = {
      {"corpus", (dir / "corpus.jsonl").string()},
      {"gold_labels", (dir / "gold.tsv").string()},
      {"frames", (dir / "frames.bin").string()},
      {"text_hier", (dir / "text_hier.tsv").string()},
      {"kb", (kFixtures / "toy_kb.tsv").string()},
      {"pseudo_labels", (dir / "pseudo.tsv").string()},
      {"cs_checkpoint", (dir / "cs.ckpt").string()},
      {"model_checkpoint", (dir / "merp.ckpt").string()},
      {"train_log", (dir / "train_log.csv").string()},
      {"predictions", (dir / "predictions.tsv").string()},
      {"report_csv", (dir / "report.csv").string()},
      {"report_table", (dir / "report.txt").string()},
  };
  j["encoder"] = {{"dim", 32}};
  j["synthetic"] = {{"n_docs", 12}, {"noise", 0.0}};
  j["cs"] = {{"epochs", 40}, {"lr", 0.05}};
  j["merp"] = {{"epochs", 3},  {"batch_size", 128},       {"lr", 0.05},
               {"ct_heads", 4}, {"holdout_fraction", 0.1}, {"momentum", 0.9}};
  return j;
}

PipelineConfig write_and_load(const fs::path& dir, const nlohmann::json& j) {
  const auto path = dir / "config.json";
  test::write_file(path, j.dump(2));
  return load_pipeline_config(path);
}

int run_binary(const std::string& args) {
  const std::string command = kCliBin + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("full chain produces every artifact and deterministic reruns") {
  const auto dir = test::scratch_dir("cli_chain");
  const auto config = write_and_load(dir, base_config(dir));

  CHECK(run_cli_command([&] { cmd_gen_synthetic(config); }) == kExitOk);
  CHECK(run_cli_command([&] { cmd_pseudo_label(config); }) == kExitOk);
  CHECK(run_cli_command([&] { cmd_train_cs(config); }) == kExitOk);
  CHECK(run_cli_command([&] { cmd_train(config); }) == kExitOk);
  CHECK(run_cli_command([&] { cmd_eval(config); }) == kExitOk);
  CHECK(run_cli_command([&] { cmd_report(config); }) == kExitOk);

  for (const char* artifact : {"corpus.jsonl", "gold.tsv", "pseudo.tsv", "cs.ckpt",
                               "merp.ckpt", "train_log.csv", "predictions.tsv",
                               "report.csv", "report.txt"}) {
    CHECK(fs::exists(dir / artifact));
  }

  // repeating a stage with the same seed yields byte-identical artifacts
  const auto corpus_bytes = test::read_file(dir / "corpus.jsonl");
  const auto pseudo_bytes = test::read_file(dir / "pseudo.tsv");
  cmd_gen_synthetic(config);
  cmd_pseudo_label(config);
  CHECK(test::read_file(dir / "corpus.jsonl") == corpus_bytes);
  CHECK(test::read_file(dir / "pseudo.tsv") == pseudo_bytes);

  // the evaluation over a prediction run for the same seed reproduces too
  const auto report_bytes = test::read_file(dir / "report.csv");
  cmd_eval(config);
  CHECK(test::read_file(dir / "report.csv") == report_bytes);
}

TEST_CASE("missing inputs exit with status 2") {
  const auto dir = test::scratch_dir("cli_missing");
  const auto config = write_and_load(dir, base_config(dir));
  // no corpus generated yet
  CHECK(run_cli_command([&] { cmd_pseudo_label(config); }) == kExitMissingInput);
  CHECK(run_cli_command([&] { cmd_train(config); }) == kExitMissingInput);
  CHECK(run_cli_command([&] { cmd_eval(config); }) == kExitMissingInput);
}

TEST_CASE("configuration problems exit with status 4") {
  const auto dir = test::scratch_dir("cli_config");
  auto j = base_config(dir);
  j.erase("seed");
  const auto config = write_and_load(dir, j);
  CHECK(run_cli_command([&] { cmd_gen_synthetic(config); }) == kExitConfigError);

  auto j2 = base_config(dir);
  j2["paths"].erase("corpus");
  const auto config2 = write_and_load(dir, j2);
  CHECK(run_cli_command([&] { cmd_gen_synthetic(config2); }) == kExitConfigError);
}

TEST_CASE("gold labels outside the corpus pair space exit with status 3") {
  const auto dir = test::scratch_dir("cli_universe");
  const auto config = write_and_load(dir, base_config(dir));
  cmd_gen_synthetic(config);
  cmd_pseudo_label(config);
  cmd_train_cs(config);
  cmd_train(config);

  // append a gold record naming an event that no document has
  std::ofstream out(dir / "gold.tsv", std::ios::app | std::ios::binary);
  out << "doc0\te999\tv0\tIdentical\t1\tgold\n";
  out.close();
  CHECK(run_cli_command([&] { cmd_eval(config); }) == kExitDataError);
}

TEST_CASE("flag overrides beat config values") {
  const auto dir = test::scratch_dir("cli_flags");
  auto config = write_and_load(dir, base_config(dir));
  FlagOverrides flags;
  flags.seed = 99;
  flags.lambda = 25.0;
  flags.prune_threshold = 20.0;
  flags.workers = 2;
  apply_overrides(config, flags);
  CHECK(config.seed == 99);
  CHECK(config.lambda == 25.0);
  CHECK(config.merp.prune_threshold == 20.0);
  CHECK(config.workers == 2);

  FlagOverrides bad_mode;
  bad_mode.mode = "bogus";
  CHECK_THROWS_AS(apply_overrides(config, bad_mode), ConfigError);
}

TEST_CASE("report command matches the golden fixture") {
  const auto dir = test::scratch_dir("cli_report");
  auto j = base_config(dir);
  j["paths"]["report_csv"] = (kFixtures / "report_fixture.csv").string();
  j["paths"]["report_table"] = (dir / "report.txt").string();
  const auto config = write_and_load(dir, j);
  CHECK(run_cli_command([&] { cmd_report(config); }) == kExitOk);
  CHECK(test::read_file(dir / "report.txt") ==
        test::read_file(kFixtures / "report_golden.txt"));
}

TEST_CASE("iete2ve mode remaps predicted text events before scoring") {
  const auto dir = test::scratch_dir("cli_iete2ve");
  auto config = write_and_load(dir, base_config(dir));
  cmd_gen_synthetic(config);
  cmd_pseudo_label(config);
  cmd_train_cs(config);
  cmd_train(config);
  cmd_eval(config);
  const auto te2ve_rows = load_metrics_csv(dir / "report.csv");

  // predicted corpus: identical spans under fresh ids -> every event matches,
  // so IETe2Ve reproduces the Te2Ve scores
  auto docs = load_corpus(dir / "corpus.jsonl");
  for (auto& doc : docs) {
    for (auto& e : doc.text_events) e.id = "pred_" + e.id;
  }
  save_corpus(docs, dir / "pred_corpus.jsonl");

  config.mode = "iete2ve";
  config.paths.pred_corpus = (dir / "pred_corpus.jsonl").string();
  config.paths.report_csv = (dir / "report_ie.csv").string();
  config.paths.predictions = (dir / "predictions_ie.tsv").string();
  CHECK(run_cli_command([&] { cmd_eval(config); }) == kExitOk);
  const auto ie_rows = load_metrics_csv(dir / "report_ie.csv");

  REQUIRE(te2ve_rows.size() == 1);
  REQUIRE(ie_rows.size() == 1);
  CHECK(ie_rows[0].second.hierarchical.f1 == te2ve_rows[0].second.hierarchical.f1);
  CHECK(ie_rows[0].second.identical.f1 == te2ve_rows[0].second.identical.f1);
  CHECK(ie_rows[0].second.avg_f1 == te2ve_rows[0].second.avg_f1);
}

TEST_CASE("the installed binary wires commands to exit codes") {
  const auto dir = test::scratch_dir("cli_binary");
  const auto j = base_config(dir);
  test::write_file(dir / "config.json", j.dump(2));
  const std::string cfg = " --config " + (dir / "config.json").string();

  CHECK(run_binary("gen-synthetic" + cfg) == 0);
  CHECK(run_binary("pseudo-label" + cfg) == 0);
  CHECK(run_binary("train-cs" + cfg) == 0);
  // eval before train: the checkpoint is missing
  CHECK(run_binary("eval" + cfg) == 2);
  CHECK(run_binary("train" + cfg) == 0);
  CHECK(run_binary("eval" + cfg) == 0);
  CHECK(run_binary("report" + cfg) == 0);

  // a config error surfaces as exit 4 through the binary as well
  CHECK(run_binary("gen-synthetic --config /nonexistent.json") == 2);
  CHECK(run_binary("eval" + cfg + " --mode bogus") == 4);
}
