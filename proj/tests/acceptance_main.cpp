// Acceptance suite: one criterion per run block, one PASS/FAIL line each.
// Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "evrel/commonsense.hpp"
#include "evrel/embedding.hpp"
#include "evrel/evaluation.hpp"
#include "evrel/merp.hpp"
#include "evrel/pipeline.hpp"
#include "evrel/pseudolabel.hpp"
#include "evrel/rng.hpp"
#include "evrel/synthetic.hpp"

using namespace evrel;
namespace fs = std::filesystem;

namespace {

std::string g_cli = EVREL_CLI_BIN;
const fs::path kFixtures = EVREL_FIXTURE_DIR;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
  if (!condition) throw Failure(message);
}

void run_cli(const std::string& args) {
  const std::string command = g_cli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  require(WEXITSTATUS(status) == 0, "command failed: " + g_cli + " " + args);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// ---------------------------------------------------------------------------
// shared state across the chain-based criteria

fs::path g_work;
double g_full_avg_f1 = 0.0;

// Reference values from the pinned implementation run of the synthetic chain
// (200 docs, noise 0.1, seed 7, d=32, 15 epochs). The chain is deterministic,
// so reruns must land within +/-0.05 of these.
constexpr double kPinnedHierF1 = 0.84492;
constexpr double kPinnedIdentF1 = 0.936782;

nlohmann::json chain_config(const fs::path& dir) {
  nlohmann::json j;
  j["seed"] = 7;
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
  j["synthetic"] = {{"n_docs", 200}, {"noise", 0.1}};
  j["cs"] = {{"epochs", 200}, {"lr", 0.05}, {"neg_ratio", 1.0}};
  j["merp"] = {{"epochs", 15},   {"batch_size", 128},        {"lr", 0.05},
               {"ct_heads", 4},  {"holdout_fraction", 0.05}, {"momentum", 0.9},
               {"norel_ratio", 3.0}};
  return j;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j,
                      const std::string& name = "config.json") {
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2);
  return path;
}

// ---------------------------------------------------------------------------
// criteria

void metric_fixed_points() {
  require(render_pct(f1_score(0.357, 0.050)) == "8.8",
          "F1(35.7, 5.0) must render 8.8");
  require(render_pct(avg_f1(0.088, 0.139)) == "11.4",
          "Avg F1(8.8, 13.9) must render 11.4");
  require(render_pct(f1_score(0.219, 0.221)) == "22.0",
          "F1(21.9, 22.1) must render 22.0");
}

void metric_oracle_equivalence() {
  rng::Rng rng(1001);
  const auto random_label = [&rng]() {
    const double u = rng.uniform();
    return u < 0.34 ? Label::Hierarchical : (u < 0.67 ? Label::Identical : Label::NoRel);
  };
  for (int trial = 0; trial < 1000; ++trial) {
    LabeledPairSet gold, pred;
    const int universe = 1 + static_cast<int>(rng.uniform_int(0, 199));
    for (int i = 0; i < universe; ++i) {
      const PairKey k{"doc" + std::to_string(rng.uniform_int(0, 3)),
                      "e" + std::to_string(rng.uniform_int(0, 13)),
                      "v" + std::to_string(rng.uniform_int(0, 13))};
      const Label g = random_label();
      const Label p = random_label();
      if (g != Label::NoRel) gold[k] = g;
      if (p != Label::NoRel) pred[k] = p;
    }
    for (const Label t : {Label::Hierarchical, Label::Identical}) {
      // brute-force counting oracle
      long tp = 0, np = 0, ng = 0;
      for (const auto& [k, label] : pred) {
        if (label != t) continue;
        ++np;
        const auto it = gold.find(k);
        if (it != gold.end() && it->second == t) ++tp;
      }
      for (const auto& [k, label] : gold) {
        if (label == t) ++ng;
      }
      const double precision = np ? static_cast<double>(tp) / np : 0.0;
      const double recall = ng ? static_cast<double>(tp) / ng : 0.0;
      const double f1 =
          precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;

      const auto got = relation_prf(gold, pred, t);
      require(got.counts.true_positive == tp && got.counts.predicted == np &&
                  got.counts.gold == ng,
              "PRF counts diverge from the counting oracle");
      require(got.precision == precision && got.recall == recall && got.f1 == f1,
              "PRF values diverge from the counting oracle");
    }
  }
}

void propagation_oracle_equivalence() {
  rng::Rng rng(2002);
  for (int trial = 0; trial < 500; ++trial) {
    const int events = 2 + static_cast<int>(rng.uniform_int(0, 18));
    const int videos = 1 + static_cast<int>(rng.uniform_int(0, 19));
    std::vector<TextHierPair> hier;
    for (int i = 0, n = static_cast<int>(rng.uniform_int(0, 12)); i < n; ++i) {
      const int a = static_cast<int>(rng.uniform_int(0, events - 1));
      int b = static_cast<int>(rng.uniform_int(0, events - 1));
      if (a == b) b = (b + 1) % events;
      hier.push_back({"d", "e" + std::to_string(a), "e" + std::to_string(b)});
    }
    std::vector<PseudoLabel> identical;
    for (int i = 0, n = static_cast<int>(rng.uniform_int(0, 15)); i < n; ++i) {
      identical.push_back({"d", "e" + std::to_string(rng.uniform_int(0, events - 1)),
                           "v" + std::to_string(rng.uniform_int(0, videos - 1)),
                           Label::Identical, std::string(kProvRetrieval),
                           rng.uniform(31.0, 99.0)});
    }

    // nested-loop one-hop oracle
    std::set<std::pair<std::string, std::string>> expected;
    for (const auto& h : hier) {
      for (const auto& id : identical) {
        if (id.text_event_id == h.sub_event_id) {
          expected.insert({h.parent_event_id, id.video_event_id});
        }
      }
    }
    std::set<std::pair<std::string, std::string>> got;
    for (const auto& l : propagate_hierarchy(hier, identical)) {
      require(l.label == Label::Hierarchical, "propagation must emit Hierarchical");
      got.insert({l.text_event_id, l.video_event_id});
    }
    require(got == expected, "propagation diverges from the one-hop oracle");
  }
}

void threshold_monotonicity() {
  EncoderConfig ecfg;
  ecfg.dim = 32;
  ToyEncoder encoder(902, ecfg);
  encoder.plant_concepts(planted_concept_tags());
  SyntheticSpec spec;
  spec.n_docs = 20;
  spec.seed = 31;
  spec.noise = 0.1;
  const auto synth = generate_synthetic(spec, encoder, 30.39);
  TableHierPredictor predictor;
  for (const auto& p : synth.text_hier) {
    predictor.add(p.doc_id, p.parent_event_id, p.sub_event_id);
  }

  using Key = std::tuple<std::string, std::string, std::string>;
  std::vector<std::set<Key>> pair_sets, identical_sets;
  for (const double lambda : {20.0, 25.0, 30.39, 35.0}) {
    PseudoLabelOptions options;
    options.lambda = lambda;
    const auto out =
        generate_pseudo_labels(synth.docs, predictor, encoder, synth.frames, options);
    std::set<Key> pairs, identicals;
    for (const auto& l : out.labels) {
      pairs.insert({l.doc_id, l.text_event_id, l.video_event_id});
      if (l.label == Label::Identical) {
        identicals.insert({l.doc_id, l.text_event_id, l.video_event_id});
      }
    }
    pair_sets.push_back(std::move(pairs));
    identical_sets.push_back(std::move(identicals));
  }
  require(!pair_sets[0].empty(), "the lowest threshold must produce labels");
  for (std::size_t i = 1; i < pair_sets.size(); ++i) {
    for (const auto& k : pair_sets[i]) {
      require(pair_sets[i - 1].count(k) == 1, "label sets are not nested in lambda");
    }
    for (const auto& k : identical_sets[i]) {
      require(identical_sets[i - 1].count(k) == 1,
              "identical label sets are not nested in lambda");
    }
  }
}

bool gradient_close(double fd, double an) {
  return std::abs(fd - an) <= 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-9;
}

void gradient_checks() {
  // --- weighted cross-entropy through CT and head: d=8, 3 video events ---
  MerpConfig cfg;
  cfg.dim = 8;
  cfg.ct_heads = 2;
  cfg.max_video_events = 8;
  cfg.holdout_fraction = 0.0;
  cfg.lr = 0.05;
  CsExtractor cs(8, 1, 17);
  cs.freeze();
  MerpModel model = MerpModel::init(cfg, cs, 23);

  rng::Rng rng(73);
  const auto rv = [&rng](int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    return v;
  };
  for (Eigen::Index i = 0; i < model.feature_mean.size(); ++i) {
    model.feature_mean[i] = 0.1 * rng.normal();
    model.feature_std[i] = 0.5 + rng.uniform();
  }
  Eigen::MatrixXd video(3, 8);
  for (int r = 0; r < 3; ++r) video.row(r) = rv(8).transpose();
  std::vector<Embedding> fts = {rv(8), rv(8)};
  const std::vector<std::tuple<int, int, Label>> examples = {
      {0, 0, Label::Hierarchical}, {0, 1, Label::Identical}, {1, 2, Label::NoRel},
      {1, 0, Label::NoRel},        {0, 2, Label::Identical},
  };
  const Eigen::Vector3d weights(1.4, 0.8, 0.6);

  const auto loss_at = [&]() {
    const Eigen::MatrixXd ct_out = ct_forward(model, video);
    double total = 0.0;
    for (const auto& [ti, vi, label] : examples) {
      const Embedding cfv = ct_out.row(vi).transpose();
      const auto probs = classify_pair(
          assemble_features(fts[static_cast<std::size_t>(ti)], cfv, model), model);
      const int y = label == Label::Hierarchical ? 0 : label == Label::Identical ? 1 : 2;
      total += -weights[y] * std::log(std::max(probs[y], 1e-300)) /
               static_cast<double>(examples.size());
    }
    return total;
  };

  // analytic gradients
  MerpGradients analytic = MerpGradients::zeros_like(model);
  {
    CtCache cache;
    const Eigen::MatrixXd ct_out = ct_forward(model, video, &cache);
    Eigen::MatrixXd dcfv = Eigen::MatrixXd::Zero(3, 8);
    const double inv = 1.0 / static_cast<double>(examples.size());
    for (const auto& [ti, vi, label] : examples) {
      const Embedding& ft = fts[static_cast<std::size_t>(ti)];
      const Embedding cfv = ct_out.row(vi).transpose();
      const Eigen::VectorXd z =
          ((concat_features(assemble_features(ft, cfv, model)) - model.feature_mean)
               .array() /
           model.feature_std.array())
              .matrix();
      const Eigen::VectorXd hidden = (model.head_w1 * z + model.head_b1).array().tanh();
      const Eigen::Vector3d logits = model.head_w2 * hidden + model.head_b2;
      const double mx = logits.maxCoeff();
      const Eigen::Vector3d ex = (logits.array() - mx).exp();
      const Eigen::Vector3d probs = ex / ex.sum();
      const int y = label == Label::Hierarchical ? 0 : label == Label::Identical ? 1 : 2;
      Eigen::Vector3d dlogits = probs;
      dlogits[y] -= 1.0;
      dlogits *= weights[y] * inv;
      analytic.head_w2 += dlogits * hidden.transpose();
      analytic.head_b2 += dlogits;
      const Eigen::VectorXd dh = model.head_w2.transpose() * dlogits;
      const Eigen::VectorXd da1 = (dh.array() * (1.0 - hidden.array().square())).matrix();
      analytic.head_w1 += da1 * z.transpose();
      analytic.head_b1 += da1;
      const Eigen::VectorXd dz =
          ((model.head_w1.transpose() * da1).array() / model.feature_std.array()).matrix();
      Eigen::VectorXd dc = dz.segment(8, 8);
      Eigen::VectorXd input(16);
      input << ft, cfv;
      dc += cs.input_gradient(input, dz.segment(16, 512)).tail(8);
      dc -= dz.segment(528, 8);
      dc += dz.segment(536, 8).cwiseProduct(ft);
      dcfv.row(vi) += dc.transpose();
    }
    ct_backward(model, cache, dcfv, analytic);
  }

  const double h = 1e-5;
  long checked = 0;
  visit_parameters(
      model,
      [&](auto& param, const auto& grad) {
        auto& p = const_cast<std::decay_t<decltype(param)>&>(param);
        const Eigen::Index stride = std::max<Eigen::Index>(1, p.size() / 150);
        for (Eigen::Index flat = 0; flat < p.size(); flat += stride) {
          double* cell = p.data() + flat;
          const double saved = *cell;
          *cell = saved + h;
          const double up = loss_at();
          *cell = saved - h;
          const double down = loss_at();
          *cell = saved;
          ++checked;
          require(gradient_close((up - down) / (2.0 * h), grad.data()[flat]),
                  "cross-entropy gradient mismatch");
        }
      },
      analytic);
  require(checked > 300, "gradient check probed too few entries");

  // --- contrastive loss on a 5-pair KB batch ---
  EncoderConfig ecfg;
  ecfg.dim = 8;
  const ToyEncoder encoder(11, ecfg);
  std::vector<KbEventPair> pairs;
  for (int i = 0; i < 3; ++i) {
    pairs.push_back({"parent" + std::to_string(i), "sub" + std::to_string(i), true});
  }
  for (int i = 0; i < 2; ++i) {
    pairs.push_back({"rand" + std::to_string(i), "other" + std::to_string(i), false});
  }
  const CsBatch batch = embed_kb_pairs(pairs, encoder);
  const double margin = 20.0;  // negatives inside the hinge, away from the kink
  CsExtractor extractor(8, 1, 21);
  CsGradients cgrads;
  cs_loss(extractor, batch, margin, &cgrads);

  const auto check_cs = [&](const Eigen::MatrixXd& param, const Eigen::MatrixXd& grad,
                            auto setter) {
    const Eigen::Index stride = std::max<Eigen::Index>(1, param.size() / 150);
    for (Eigen::Index flat = 0; flat < param.size(); flat += stride) {
      const Eigen::Index r = flat % param.rows();
      const Eigen::Index c = flat / param.rows();
      Eigen::MatrixXd up = param, down = param;
      up(r, c) += h;
      down(r, c) -= h;
      CsExtractor eu = extractor, ed = extractor;
      setter(eu, up);
      setter(ed, down);
      const double fd =
          (cs_loss(eu, batch, margin) - cs_loss(ed, batch, margin)) / (2.0 * h);
      require(gradient_close(fd, grad(r, c)), "contrastive gradient mismatch");
    }
  };
  check_cs(extractor.w1(), cgrads.w1,
           [](CsExtractor& e, const Eigen::MatrixXd& m) { e.set_w1(m); });
  check_cs(extractor.b1(), cgrads.b1,
           [](CsExtractor& e, const Eigen::MatrixXd& m) { e.set_b1(m); });
  check_cs(extractor.anchor(), cgrads.anchor,
           [](CsExtractor& e, const Eigen::MatrixXd& m) { e.set_anchor(m); });
}

void softmax_normalization() {
  MerpConfig cfg;
  cfg.dim = 8;
  cfg.ct_heads = 2;
  CsExtractor cs(8, 1, 9);
  cs.freeze();
  const MerpModel model = MerpModel::init(cfg, cs, 13);
  rng::Rng rng(3003);
  for (int trial = 0; trial < 10000; ++trial) {
    Eigen::VectorXd a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    const auto probs = classify_pair(assemble_features(a, b, model), model);
    require(probs.minCoeff() >= 0.0, "negative probability");
    require(std::abs(probs.sum() - 1.0) <= 1e-6, "probabilities must sum to 1");
  }
}

void mask_properties() {
  rng::Rng rng(4004);
  for (int length = 1; length <= 512; ++length) {
    const int ks[] = {0, length / 2, length - 1,
                      static_cast<int>(rng.uniform_int(0, length - 1))};
    for (const double p : {0.5, 1.0, 2.0}) {
      for (const int k : ks) {
        const auto w = event_attention_weights(length, k, p);
        require(std::abs(w.sum() - 1.0) <= 1e-9, "mask must normalize to 1");
        require(w.minCoeff() > 0.0, "mask must be positive");
        int peak = 0;
        w.maxCoeff(&peak);
        require(peak == k, "mask must peak at the event token");
        for (int i = k; i + 1 < length; ++i) {
          require(w[i] >= w[i + 1], "mask must decay right of the event");
        }
        for (int i = k; i > 0; --i) {
          require(w[i] >= w[i - 1], "mask must decay left of the event");
        }
      }
    }
  }
}

void pruning_contract() {
  rng::Rng rng(5005);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RelationRecord> set;
    std::map<std::pair<std::string, std::string>, double> sims;
    const int count = 1 + static_cast<int>(rng.uniform_int(0, 30));
    for (int i = 0; i < count; ++i) {
      RelationRecord r;
      r.doc_id = "d";
      r.text_event_id = "e" + std::to_string(rng.uniform_int(0, 9));
      r.video_event_id = "v" + std::to_string(i);
      const double roll = rng.uniform();
      r.label = roll < 0.4 ? Label::Identical
                           : (roll < 0.8 ? Label::Hierarchical : Label::NoRel);
      set.push_back(r);
      sims[{r.text_event_id, r.video_event_id}] = rng.uniform(0.0, 60.0);
    }
    const auto sim_of = [&sims](const RelationRecord& r) {
      return sims.at({r.text_event_id, r.video_event_id});
    };
    const auto out = prune_identical(set, sim_of, 28.0);
    require(out.size() <= set.size(), "pruning must never add predictions");
    std::size_t oi = 0;
    for (const auto& r : set) {
      const bool kept = !(r.label == Label::Identical && sim_of(r) < 28.0);
      if (kept) {
        require(oi < out.size() && out[oi] == r,
                "pruning must keep non-weak predictions untouched");
        ++oi;
      }
    }
    require(oi == out.size(), "pruning emitted an unexpected prediction");
  }
}

MetricReport read_single_report(const fs::path& csv) {
  const auto rows = load_metrics_csv(csv);
  require(rows.size() == 1, "expected a single metric row");
  return rows[0].second;
}

void end_to_end_recovery() {
  g_work = fs::temp_directory_path() / "evrel_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  const auto cfg = write_config(g_work, chain_config(g_work));
  const std::string flags = " --config " + cfg.string();

  run_cli("gen-synthetic" + flags);
  run_cli("pseudo-label" + flags);
  run_cli("train-cs" + flags);
  run_cli("train" + flags);
  run_cli("eval" + flags);

  const auto report = read_single_report(g_work / "report.csv");
  g_full_avg_f1 = report.avg_f1;
  std::ostringstream detail;
  detail << "H F1=" << report.hierarchical.f1 << " I F1=" << report.identical.f1;
  require(report.hierarchical.f1 >= 0.80,
          "Hierarchical F1 below 0.80 (" + detail.str() + ")");
  require(report.identical.f1 >= 0.80, "Identical F1 below 0.80 (" + detail.str() + ")");
  if (kPinnedHierF1 >= 0.0) {
    require(std::abs(report.hierarchical.f1 - kPinnedHierF1) <= 0.05,
            "Hierarchical F1 drifted from the pinned reference (" + detail.str() + ")");
    require(std::abs(report.identical.f1 - kPinnedIdentF1) <= 0.05,
            "Identical F1 drifted from the pinned reference (" + detail.str() + ")");
  }
  std::cout << "        " << detail.str() << "\n";
}

void ablation_direction() {
  require(!g_work.empty(), "end-to-end criterion must run first");
  struct Variant {
    const char* name;
    bool ct, cs, ei;
  };
  for (const Variant v : {Variant{"basic", false, false, false},
                          Variant{"ct", true, false, false},
                          Variant{"cs", false, true, false},
                          Variant{"ei", false, false, true}}) {
    auto j = chain_config(g_work);
    j["merp"]["use_ct"] = v.ct;
    j["merp"]["use_cs"] = v.cs;
    j["merp"]["use_ei"] = v.ei;
    j["paths"]["model_checkpoint"] = (g_work / (std::string("merp_") + v.name + ".ckpt")).string();
    j["paths"]["report_csv"] = (g_work / (std::string("report_") + v.name + ".csv")).string();
    j["paths"]["predictions"] =
        (g_work / (std::string("predictions_") + v.name + ".tsv")).string();
    j["paths"]["train_log"] = (g_work / (std::string("train_log_") + v.name + ".csv")).string();
    const auto cfg = write_config(g_work, j, std::string("config_") + v.name + ".json");
    const std::string flags = " --config " + cfg.string();
    run_cli("train" + flags);
    run_cli("eval" + flags);
    const auto report =
        read_single_report(g_work / (std::string("report_") + v.name + ".csv"));
    std::cout << "        " << v.name << " Avg F1=" << report.avg_f1 << "\n";
    require(g_full_avg_f1 >= report.avg_f1 - 0.02,
            std::string("full model Avg F1 trails the ") + v.name + " variant by > 0.02");
  }
  std::cout << "        full Avg F1=" << g_full_avg_f1 << "\n";
}

void iaa_fixture() {
  const PairKey r1{"d", "e0", "v0"};
  const PairKey r2{"d", "e0", "v1"};
  const PairKey r3{"d", "e1", "v0"};
  require(iaa({{r1, r2}, {r1}}) == 0.5, "IAA of the 2-annotator fixture must be 0.5");
  require(iaa({{r1, r2}, {r1, r2}, {r1, r2}}) == 1.0,
          "identical annotator sets must score 1");
  require(iaa({{r1}, {r2}, {r3}}) == 0.0, "disjoint annotator sets must score 0");
  // three-annotator fixture: union {r1,r2,r3}, r1 marked 3x, r2 2x, r3 1x
  require(std::abs(iaa({{r1, r2}, {r1, r2, r3}, {r1}}) - 2.0 / 3.0) < 1e-15,
          "3-annotator fixture must score 2/3");
}

void chain_determinism() {
  require(!g_work.empty(), "end-to-end criterion must run first");
  const fs::path rerun = g_work / "rerun";
  fs::create_directories(rerun);
  const auto cfg = write_config(rerun, chain_config(rerun));
  const std::string flags = " --config " + cfg.string();
  run_cli("gen-synthetic" + flags);
  run_cli("pseudo-label" + flags);
  run_cli("train-cs" + flags);
  run_cli("train" + flags);
  run_cli("eval" + flags);
  run_cli("report" + flags);

  for (const char* artifact :
       {"corpus.jsonl", "gold.tsv", "text_hier.tsv", "frames.bin", "pseudo.tsv",
        "cs.ckpt", "merp.ckpt", "train_log.csv", "predictions.tsv", "report.csv"}) {
    require(read_file(g_work / artifact) == read_file(rerun / artifact),
            std::string("artifact differs between identically seeded runs: ") + artifact);
  }
}

struct Criterion {
  std::string name;
  double budget_s;
  std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::string(argv[i]) == "--cli") g_cli = argv[i + 1];
  }

  const std::vector<Criterion> criteria = {
      {"metric-fixed-points", 1.0, metric_fixed_points},
      {"metric-oracle-equivalence", 30.0, metric_oracle_equivalence},
      {"propagation-oracle-equivalence", 10.0, propagation_oracle_equivalence},
      {"threshold-monotonicity", 30.0, threshold_monotonicity},
      {"gradient-checks", 60.0, gradient_checks},
      {"softmax-normalization", 10.0, softmax_normalization},
      {"mask-properties", 10.0, mask_properties},
      {"pruning-contract", 10.0, pruning_contract},
      {"end-to-end-synthetic-recovery", 600.0, end_to_end_recovery},
      {"ablation-direction", 1800.0, ablation_direction},
      {"iaa-fixture", 1.0, iaa_fixture},
      {"chain-determinism", 900.0, chain_determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      criterion.run();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (error.empty() && elapsed > criterion.budget_s) {
      error = "exceeded time budget (" + std::to_string(elapsed) + "s > " +
              std::to_string(criterion.budget_s) + "s)";
    }
    if (error.empty()) {
      std::printf("PASS  %-32s (%.2fs)\n", criterion.name.c_str(), elapsed);
    } else {
      std::printf("FAIL  %-32s (%.2fs): %s\n", criterion.name.c_str(), elapsed,
                  error.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
