#include "evrel/pipeline.hpp"

#include <fstream>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "evrel/errors.hpp"
#include "evrel/evaluation.hpp"
#include "evrel/rng.hpp"

namespace evrel {

std::uint64_t PipelineConfig::stage_seed(std::string_view stage) const {
  return rng::substream(seed, stage);
}

namespace {

void require_seed(const PipelineConfig& config) {
  if (!config.seed_set) {
    throw ConfigError("a seed is required (config key 'seed' or flag --seed)");
  }
}

std::filesystem::path require_path(const std::string& value, std::string_view key) {
  if (value.empty()) {
    throw ConfigError("config path '" + std::string(key) + "' is not set");
  }
  return value;
}

std::filesystem::path require_input(const std::string& value, std::string_view key) {
  const auto path = require_path(value, key);
  if (!std::filesystem::exists(path)) {
    throw MissingInputError("missing input file " + path.string() + " (" +
                            std::string(key) + ")");
  }
  return path;
}

ToyEncoder make_encoder(const PipelineConfig& config) {
  ToyEncoder encoder(config.stage_seed("encoder"), config.encoder);
  // Every stage shares one concept geometry: the builtin tags get planted
  // orthonormal vectors so distinct concepts stay separable at small d.
  encoder.plant_concepts(planted_concept_tags());
  return encoder;
}

PseudoLabelOptions pseudo_options(const PipelineConfig& config) {
  PseudoLabelOptions options;
  options.lambda = config.lambda;
  options.conflict_policy = conflict_policy_from_string(config.conflict_policy);
  options.multi_hop = config.multi_hop;
  options.workers = config.workers;
  return options;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }

  PipelineConfig c;
  try {
    if (j.contains("seed")) {
      c.seed = j.at("seed").get<std::uint64_t>();
      c.seed_set = true;
    }
    c.workers = j.value("workers", c.workers);
    c.mode = j.value("mode", c.mode);
    c.lambda = j.value("lambda", c.lambda);
    c.conflict_policy = j.value("conflict_policy", c.conflict_policy);
    c.multi_hop = j.value("multi_hop", c.multi_hop);

    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.paths.corpus = p.value("corpus", "");
      c.paths.gold_labels = p.value("gold_labels", "");
      c.paths.frames = p.value("frames", "");
      c.paths.text_hier = p.value("text_hier", "");
      c.paths.kb = p.value("kb", "");
      c.paths.pseudo_labels = p.value("pseudo_labels", "");
      c.paths.cs_checkpoint = p.value("cs_checkpoint", "");
      c.paths.model_checkpoint = p.value("model_checkpoint", "");
      c.paths.train_log = p.value("train_log", "");
      c.paths.predictions = p.value("predictions", "");
      c.paths.report_csv = p.value("report_csv", "");
      c.paths.report_table = p.value("report_table", "");
      c.paths.pred_corpus = p.value("pred_corpus", "");
    }

    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      c.encoder.dim = e.value("dim", c.encoder.dim);
      c.encoder.fps = e.value("fps", c.encoder.fps);
      c.encoder.mask_exponent = e.value("mask_exponent", c.encoder.mask_exponent);
      c.encoder.similarity_scale = e.value("similarity_scale", c.encoder.similarity_scale);
      c.encoder.frame_jitter = e.value("frame_jitter", c.encoder.frame_jitter);
    }

    c.merp = MerpConfig::from_json(j.value("merp", nlohmann::json::object()));
    if (!j.contains("merp") || !j.at("merp").contains("dim")) {
      c.merp.dim = c.encoder.dim;
    }

    if (j.contains("cs")) {
      const auto& cs = j.at("cs");
      c.cs.depth = cs.value("depth", c.cs.depth);
      c.cs.margin = cs.value("margin", c.cs.margin);
      c.cs.lr = cs.value("lr", c.cs.lr);
      c.cs.epochs = cs.value("epochs", c.cs.epochs);
      c.cs.neg_ratio = cs.value("neg_ratio", c.cs.neg_ratio);
    }

    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      c.synthetic.n_docs = s.value("n_docs", c.synthetic.n_docs);
      c.synthetic.text_events_min = s.value("text_events_min", c.synthetic.text_events_min);
      c.synthetic.text_events_max = s.value("text_events_max", c.synthetic.text_events_max);
      c.synthetic.video_events_min =
          s.value("video_events_min", c.synthetic.video_events_min);
      c.synthetic.video_events_max =
          s.value("video_events_max", c.synthetic.video_events_max);
      c.synthetic.hierarchy_density =
          s.value("hierarchy_density", c.synthetic.hierarchy_density);
      c.synthetic.identical_density =
          s.value("identical_density", c.synthetic.identical_density);
      c.synthetic.textless_subevent_rate =
          s.value("textless_subevent_rate", c.synthetic.textless_subevent_rate);
      c.synthetic.noise = s.value("noise", c.synthetic.noise);
    }

    if (j.contains("eval")) {
      c.eval_predictor = j.at("eval").value("predictor", c.eval_predictor);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }

  if (c.mode != "te2ve" && c.mode != "iete2ve") {
    throw ConfigError("mode must be 'te2ve' or 'iete2ve'");
  }
  return c;
}

void apply_overrides(PipelineConfig& config, const FlagOverrides& flags) {
  if (flags.seed) {
    config.seed = *flags.seed;
    config.seed_set = true;
  }
  if (flags.lambda) config.lambda = *flags.lambda;
  if (flags.prune_threshold) config.merp.prune_threshold = *flags.prune_threshold;
  if (flags.mode) {
    if (*flags.mode != "te2ve" && *flags.mode != "iete2ve") {
      throw ConfigError("mode must be 'te2ve' or 'iete2ve'");
    }
    config.mode = *flags.mode;
  }
  if (flags.workers) config.workers = *flags.workers;
}

void cmd_gen_synthetic(const PipelineConfig& config) {
  require_seed(config);
  const auto corpus_path = require_path(config.paths.corpus, "corpus");
  const auto gold_path = require_path(config.paths.gold_labels, "gold_labels");
  const auto frames_path = require_path(config.paths.frames, "frames");
  const auto hier_path = require_path(config.paths.text_hier, "text_hier");

  SyntheticSpec spec = config.synthetic;
  spec.seed = config.stage_seed("synthetic");
  const ToyEncoder encoder = make_encoder(config);
  const auto output = generate_synthetic(spec, encoder, config.lambda);

  save_corpus(output.docs, corpus_path);
  save_relation_records(output.gold, gold_path);
  save_text_hier_pairs(output.text_hier, hier_path);
  output.frames.save(frames_path);
}

void cmd_pseudo_label(const PipelineConfig& config) {
  require_seed(config);
  const auto corpus = load_corpus(require_input(config.paths.corpus, "corpus"));
  const auto frames = FrameStore::load(require_input(config.paths.frames, "frames"));
  const auto predictor =
      FileHierPredictor::load(require_input(config.paths.text_hier, "text_hier"));
  const ToyEncoder encoder = make_encoder(config);

  const auto set =
      generate_pseudo_labels(corpus, predictor, encoder, frames, pseudo_options(config));
  if (set.conflicts > 0) {
    std::cerr << "note: " << set.conflicts << " pair conflict(s) resolved by policy "
              << config.conflict_policy << "\n";
  }
  save_pseudo_labels(set.labels, require_path(config.paths.pseudo_labels, "pseudo_labels"));
}

void cmd_train_cs(const PipelineConfig& config) {
  require_seed(config);
  const auto edges = load_kb_edges(require_input(config.paths.kb, "kb"));
  const auto pairs = extract_kb_pairs(edges, default_subevent_relations(),
                                      config.cs.neg_ratio, config.stage_seed("cs.negatives"));
  const ToyEncoder encoder = make_encoder(config);
  const auto result = train_cs(pairs, encoder, config.cs, config.stage_seed("cs.train"));
  result.extractor.save(require_path(config.paths.cs_checkpoint, "cs_checkpoint"));
}

void cmd_train(const PipelineConfig& config) {
  require_seed(config);
  const auto corpus = load_corpus(require_input(config.paths.corpus, "corpus"));
  const auto frames = FrameStore::load(require_input(config.paths.frames, "frames"));
  const auto labels =
      load_pseudo_labels(require_input(config.paths.pseudo_labels, "pseudo_labels"));
  const ToyEncoder encoder = make_encoder(config);

  CsExtractor cs;
  if (config.merp.use_cs) {
    cs = CsExtractor::load(require_input(config.paths.cs_checkpoint, "cs_checkpoint"));
  }
  MerpConfig merp_config = config.merp;
  merp_config.dim = config.encoder.dim;
  merp_config.seed = config.stage_seed("merp");

  const auto result = train_merp(corpus, labels, encoder, frames, cs, merp_config);
  result.model.save(require_path(config.paths.model_checkpoint, "model_checkpoint"));
  save_train_log(result.history, require_path(config.paths.train_log, "train_log"));
}

namespace {

// Every gold/prediction key must live inside the corpus pair space.
void check_pair_universe(const std::vector<Document>& corpus, const LabeledPairSet& set,
                         std::string_view what) {
  std::map<std::string, const Document*> by_id;
  for (const auto& doc : corpus) by_id[doc.doc_id] = &doc;
  for (const auto& [key, label] : set) {
    if (key.text_event_id.rfind("__unmatched__:", 0) == 0) continue;
    const auto it = by_id.find(key.doc_id);
    if (it == by_id.end()) {
      throw ValidationError(key.doc_id,
                            std::string(what) + " references a document outside the corpus");
    }
    if (!it->second->find_text_event(key.text_event_id) ||
        !it->second->find_video_event(key.video_event_id)) {
      throw ValidationError(key.doc_id, std::string(what) + " pair " + key.text_event_id +
                                            " -> " + key.video_event_id +
                                            " is outside the corpus pair space");
    }
  }
}

std::vector<RelationRecord> records_from_pairs(const LabeledPairSet& set,
                                               const std::string& provenance) {
  std::vector<RelationRecord> records;
  for (const auto& [key, label] : set) {
    records.push_back(RelationRecord{key.doc_id, key.text_event_id, key.video_event_id,
                                     label, std::nullopt, provenance});
  }
  return records;
}

}  // namespace

void cmd_eval(const PipelineConfig& config) {
  require_seed(config);
  const auto corpus = load_corpus(require_input(config.paths.corpus, "corpus"));
  const auto gold_records =
      load_relation_records(require_input(config.paths.gold_labels, "gold_labels"));
  const LabeledPairSet gold = to_labeled_pairs(gold_records);
  check_pair_universe(corpus, gold, "gold label");

  const bool iete2ve = config.mode == "iete2ve";
  std::vector<Document> pred_corpus;
  if (iete2ve) {
    pred_corpus = load_corpus(require_input(config.paths.pred_corpus, "pred_corpus"));
  }
  const std::vector<Document>& inference_corpus = iete2ve ? pred_corpus : corpus;

  LabeledPairSet predictions;
  std::string row_name;
  if (config.eval_predictor == "model") {
    row_name = "MERP";
    const auto frames = FrameStore::load(require_input(config.paths.frames, "frames"));
    const auto model =
        MerpModel::load(require_input(config.paths.model_checkpoint, "model_checkpoint"));
    const ToyEncoder encoder = make_encoder(config);
    std::vector<RelationRecord> records;
    for (const auto& doc : inference_corpus) {
      const auto graph = predict_graph(doc, model, encoder, frames, config.merp.prune);
      for (const auto& r : graph.relations) {
        records.push_back(RelationRecord{doc.doc_id, r.text_event_id, r.video_event_id,
                                         r.label, r.confidence, "model"});
      }
    }
    predictions = to_labeled_pairs(records);
  } else if (config.eval_predictor == "mm") {
    row_name = "MM Base.";
    const auto frames = FrameStore::load(require_input(config.paths.frames, "frames"));
    const auto predictor =
        FileHierPredictor::load(require_input(config.paths.text_hier, "text_hier"));
    const ToyEncoder encoder = make_encoder(config);
    predictions =
        mm_baseline(inference_corpus, predictor, encoder, frames, pseudo_options(config));
  } else if (config.eval_predictor == "prior") {
    row_name = "Prior Base.";
    std::vector<PairKey> pairs;
    for (const auto& doc : inference_corpus) {
      for (const auto& [t, v] : pair_space(doc)) pairs.push_back(PairKey{doc.doc_id, t, v});
    }
    std::array<double, 3> prior{0.0, 0.0, 0.0};
    for (const auto& [key, label] : gold) {
      if (label == Label::Hierarchical) prior[0] += 1.0;
      if (label == Label::Identical) prior[1] += 1.0;
    }
    const double total = static_cast<double>(pairs.size());
    if (total <= 0.0) throw ValidationError("", "empty pair universe");
    prior[0] /= total;
    prior[1] /= total;
    prior[2] = 1.0 - prior[0] - prior[1];
    predictions = prior_baseline(prior, pairs, config.stage_seed("eval.prior"));
  } else if (config.eval_predictor == "file") {
    row_name = "file";
    predictions = to_labeled_pairs(
        load_relation_records(require_input(config.paths.predictions, "predictions")));
  } else {
    throw ConfigError("eval predictor must be one of: model, mm, prior, file");
  }

  if (iete2ve) {
    std::map<std::string, const Document*> gold_by_id;
    for (const auto& doc : corpus) gold_by_id[doc.doc_id] = &doc;
    std::map<std::string, std::map<std::string, std::string>> mapping;
    for (const auto& doc : pred_corpus) {
      const auto it = gold_by_id.find(doc.doc_id);
      if (it == gold_by_id.end()) {
        throw ValidationError(doc.doc_id, "predicted corpus document not in eval corpus");
      }
      mapping[doc.doc_id] =
          match_predicted_text_events(it->second->text_events, doc.text_events);
    }
    predictions = remap_predictions(predictions, mapping);
    row_name += " (IETe2Ve)";
  }
  check_pair_universe(corpus, predictions, "prediction");

  if (config.eval_predictor != "file" && !config.paths.predictions.empty()) {
    save_relation_records(records_from_pairs(predictions, config.eval_predictor),
                          config.paths.predictions);
  }

  const MetricReport report = evaluate(gold, predictions);
  write_metrics_csv({{row_name, report}},
                    require_path(config.paths.report_csv, "report_csv"));
}

void cmd_report(const PipelineConfig& config) {
  const auto rows =
      load_metrics_csv(require_input(config.paths.report_csv, "report_csv"));
  const std::string table = render_metrics_table(rows);
  if (!config.paths.report_table.empty()) {
    std::ofstream out(config.paths.report_table, std::ios::binary);
    if (!out) {
      throw MissingInputError("cannot open " + config.paths.report_table + " for writing");
    }
    out << table;
  }
  std::cout << table;
}

int run_cli_command(const std::function<void()>& command) {
  try {
    command();
    return kExitOk;
  } catch (const MissingInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace evrel
