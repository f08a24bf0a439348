#include "evrel/commonsense.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "evrel/errors.hpp"
#include "evrel/rng.hpp"
#include "evrel/tensorfile.hpp"
#include "evrel/util.hpp"

namespace evrel {

std::vector<KbEdge> load_kb_edges(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::vector<KbEdge> edges;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 3) {
      throw ParseError(path.string(), line_no,
                       "expected 3 tab-separated fields, got " + std::to_string(cols.size()));
    }
    if (cols[1].empty() || cols[2].empty()) {
      throw ParseError(path.string(), line_no, "empty phrase");
    }
    edges.push_back(KbEdge{cols[0], cols[1], cols[2]});
  }
  return edges;
}

const std::set<std::string>& default_subevent_relations() {
  static const std::set<std::string> kRelations = {"HasSubevent", "HasFirstSubevent",
                                                   "HasLastSubevent"};
  return kRelations;
}

std::vector<KbEventPair> extract_kb_pairs(const std::vector<KbEdge>& edges,
                                          const std::set<std::string>& allowed_relations,
                                          double neg_ratio, std::uint64_t seed) {
  if (neg_ratio < 0.0) throw ArgumentError("neg_ratio must be >= 0");
  std::vector<KbEventPair> pairs;
  std::set<std::pair<std::string, std::string>> positive_keys;
  std::set<std::string> phrase_set;
  for (const auto& edge : edges) {
    if (!allowed_relations.count(edge.relation)) continue;
    pairs.push_back(KbEventPair{edge.head, edge.tail, true});
    positive_keys.insert({edge.head, edge.tail});
    phrase_set.insert(edge.head);
    phrase_set.insert(edge.tail);
  }

  const auto wanted = static_cast<std::size_t>(
      std::llround(neg_ratio * static_cast<double>(pairs.size())));
  if (wanted == 0) return pairs;
  if (phrase_set.size() < 2) {
    throw ArgumentError("cannot sample negative pairs from fewer than 2 phrases");
  }

  const std::vector<std::string> phrases(phrase_set.begin(), phrase_set.end());
  rng::Rng rng(rng::substream(seed, "kb.negatives"));
  std::size_t produced = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000 * wanted + 1000;
  while (produced < wanted) {
    if (++attempts > max_attempts) {
      throw ArgumentError("unable to sample enough negative KB pairs");
    }
    const auto& head = rng.pick(phrases);
    const auto& tail = rng.pick(phrases);
    if (head == tail) continue;
    if (positive_keys.count({head, tail})) continue;
    pairs.push_back(KbEventPair{head, tail, false});
    ++produced;
  }
  return pairs;
}

void CsConfig::check() const {
  if (depth != 1 && depth != 2) throw ArgumentError("cs depth must be 1 or 2");
  if (!(margin > 0.0)) throw ArgumentError("cs margin must be > 0");
  if (!(lr > 0.0)) throw ArgumentError("cs lr must be > 0");
  if (epochs < 1) throw ArgumentError("cs epochs must be >= 1");
  if (neg_ratio < 0.0) throw ArgumentError("cs neg_ratio must be >= 0");
}

CsExtractor::CsExtractor(int event_dim, int depth, std::uint64_t seed)
    : event_dim_(event_dim), depth_(depth) {
  if (event_dim < 1) throw ArgumentError("event dim must be >= 1");
  if (depth != 1 && depth != 2) throw ArgumentError("cs depth must be 1 or 2");
  const int in = 2 * event_dim;
  rng::Rng rng(rng::substream(seed, "cs.init"));
  const auto gaussian = [&rng](Eigen::Index rows, Eigen::Index cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    }
    return m;
  };
  if (depth == 1) {
    w1_ = gaussian(kFeatureDim, in, 1.0 / std::sqrt(static_cast<double>(in)));
    b1_ = Eigen::VectorXd::Zero(kFeatureDim);
  } else {
    w1_ = gaussian(kFeatureDim, in, 1.0 / std::sqrt(static_cast<double>(in)));
    b1_ = Eigen::VectorXd::Zero(kFeatureDim);
    w2_ = gaussian(kFeatureDim, kFeatureDim, 1.0 / std::sqrt(static_cast<double>(kFeatureDim)));
    b2_ = Eigen::VectorXd::Zero(kFeatureDim);
  }
  anchor_ = gaussian(kFeatureDim, 1, 1.0 / std::sqrt(static_cast<double>(kFeatureDim)));
}

void CsExtractor::require_mutable() const {
  if (frozen_) throw ArgumentError("commonsense extractor is frozen");
}

void CsExtractor::set_w1(Eigen::MatrixXd w) {
  require_mutable();
  w1_ = std::move(w);
}
void CsExtractor::set_b1(Eigen::VectorXd b) {
  require_mutable();
  b1_ = std::move(b);
}
void CsExtractor::set_w2(Eigen::MatrixXd w) {
  require_mutable();
  w2_ = std::move(w);
}
void CsExtractor::set_b2(Eigen::VectorXd b) {
  require_mutable();
  b2_ = std::move(b);
}
void CsExtractor::set_anchor(Eigen::VectorXd a) {
  require_mutable();
  anchor_ = std::move(a);
}

Eigen::VectorXd CsExtractor::forward(const Eigen::VectorXd& input) const {
  if (input.size() != input_dim()) {
    throw ArgumentError("cs input width " + std::to_string(input.size()) + " != " +
                        std::to_string(input_dim()));
  }
  if (depth_ == 1) return w1_ * input + b1_;
  const Eigen::VectorXd hidden = (w1_ * input + b1_).array().tanh();
  return w2_ * hidden + b2_;
}

Eigen::VectorXd CsExtractor::input_gradient(const Eigen::VectorXd& input,
                                            const Eigen::VectorXd& dfeatures) const {
  if (depth_ == 1) return w1_.transpose() * dfeatures;
  const Eigen::VectorXd hidden = (w1_ * input + b1_).array().tanh();
  const Eigen::VectorXd dpre =
      (w2_.transpose() * dfeatures).array() * (1.0 - hidden.array().square());
  return w1_.transpose() * dpre;
}

Eigen::VectorXd CsExtractor::features(const Embedding& ft, const Embedding& cfv) const {
  if (ft.size() != event_dim_ || cfv.size() != event_dim_) {
    throw ArgumentError("cs feature inputs must each be " + std::to_string(event_dim_) +
                        "-dimensional");
  }
  Eigen::VectorXd input(input_dim());
  input << ft, cfv;
  return forward(input);
}

Eigen::VectorXd cs_features(const Embedding& ft, const Embedding& cfv,
                            const CsExtractor& extractor) {
  if (!extractor.frozen()) {
    throw ArgumentError("cs_features requires a frozen extractor");
  }
  return extractor.features(ft, cfv);
}

double cs_loss(const CsExtractor& extractor, const CsBatch& batch, double margin,
               CsGradients* gradients) {
  const auto n = static_cast<Eigen::Index>(batch.positive.size());
  if (n == 0) throw ArgumentError("empty cs batch");
  if (batch.inputs.rows() != n) throw ArgumentError("cs batch shape mismatch");

  if (gradients) {
    gradients->w1 = Eigen::MatrixXd::Zero(extractor.w1().rows(), extractor.w1().cols());
    gradients->b1 = Eigen::VectorXd::Zero(extractor.b1().size());
    if (extractor.depth() == 2) {
      gradients->w2 = Eigen::MatrixXd::Zero(extractor.w2().rows(), extractor.w2().cols());
      gradients->b2 = Eigen::VectorXd::Zero(extractor.b2().size());
    } else {
      gradients->w2.resize(0, 0);
      gradients->b2.resize(0);
    }
    gradients->anchor = Eigen::VectorXd::Zero(extractor.anchor().size());
  }

  constexpr double kDistEps = 1e-12;
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::VectorXd input = batch.inputs.row(k).transpose();
    Eigen::VectorXd hidden;  // depth-2 cache
    Eigen::VectorXd feature;
    if (extractor.depth() == 1) {
      feature = extractor.w1() * input + extractor.b1();
    } else {
      hidden = (extractor.w1() * input + extractor.b1()).array().tanh();
      feature = extractor.w2() * hidden + extractor.b2();
    }
    const Eigen::VectorXd diff = feature - extractor.anchor();
    const double dist = std::max(diff.norm(), kDistEps);

    Eigen::VectorXd dfeature;
    if (batch.positive[static_cast<std::size_t>(k)]) {
      total += inv_n * dist * dist;
      if (gradients) dfeature = (2.0 * inv_n) * diff;
    } else {
      const double gap = margin - dist;
      if (gap > 0.0) {
        total += inv_n * gap * gap;
        if (gradients) dfeature = (-2.0 * inv_n * gap / dist) * diff;
      } else if (gradients) {
        dfeature = Eigen::VectorXd::Zero(feature.size());
      }
    }

    if (!gradients) continue;
    gradients->anchor -= dfeature;
    if (extractor.depth() == 1) {
      gradients->w1 += dfeature * input.transpose();
      gradients->b1 += dfeature;
    } else {
      gradients->w2 += dfeature * hidden.transpose();
      gradients->b2 += dfeature;
      const Eigen::VectorXd dpre =
          (extractor.w2().transpose() * dfeature).array() * (1.0 - hidden.array().square());
      gradients->w1 += dpre * input.transpose();
      gradients->b1 += dpre;
    }
  }
  return total;
}

CsBatch embed_kb_pairs(const std::vector<KbEventPair>& pairs, const JointEncoder& encoder) {
  if (pairs.empty()) throw ArgumentError("no KB pairs to embed");
  CsBatch batch;
  batch.inputs.resize(static_cast<Eigen::Index>(pairs.size()), 2 * encoder.dim());
  batch.positive.resize(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto head = encoder.encode_text(split_ws(pairs[k].head_phrase), std::nullopt);
    const auto tail = encoder.encode_text(split_ws(pairs[k].tail_phrase), std::nullopt);
    batch.inputs.row(static_cast<Eigen::Index>(k)).head(encoder.dim()) = head.transpose();
    batch.inputs.row(static_cast<Eigen::Index>(k)).tail(encoder.dim()) = tail.transpose();
    batch.positive[k] = pairs[k].positive;
  }
  return batch;
}

CsTrainResult train_cs(const std::vector<KbEventPair>& pairs, const JointEncoder& encoder,
                       const CsConfig& config, std::uint64_t seed) {
  config.check();
  bool has_positive = false;
  bool has_negative = false;
  for (const auto& p : pairs) (p.positive ? has_positive : has_negative) = true;
  if (!has_positive || !has_negative) {
    throw ArgumentError("cs training needs at least one positive and one negative pair");
  }

  const CsBatch batch = embed_kb_pairs(pairs, encoder);
  CsTrainResult result;
  result.extractor = CsExtractor(encoder.dim(), config.depth, seed);
  result.initial_loss = cs_loss(result.extractor, batch, config.margin);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    CsGradients grads;
    cs_loss(result.extractor, batch, config.margin, &grads);
    auto& e = result.extractor;
    e.set_w1(e.w1() - config.lr * grads.w1);
    e.set_b1(e.b1() - config.lr * grads.b1);
    if (e.depth() == 2) {
      e.set_w2(e.w2() - config.lr * grads.w2);
      e.set_b2(e.b2() - config.lr * grads.b2);
    }
    e.set_anchor(e.anchor() - config.lr * grads.anchor);
    result.loss_history.push_back(cs_loss(e, batch, config.margin));
  }
  result.extractor.freeze();
  return result;
}

void CsExtractor::save(const std::filesystem::path& path) const {
  io::TensorFile file;
  file.meta = {{"format", "cs-extractor"},
               {"version", 1},
               {"event_dim", event_dim_},
               {"depth", depth_},
               {"feature_dim", kFeatureDim}};
  file.add("w1", w1_);
  file.add("b1", b1_);
  if (depth_ == 2) {
    file.add("w2", w2_);
    file.add("b2", b2_);
  }
  file.add("anchor", anchor_);
  file.save(path);
}

CsExtractor CsExtractor::load(const std::filesystem::path& path) {
  const auto file = io::TensorFile::load(path);
  if (file.meta.value("format", "") != "cs-extractor") {
    throw ParseError(path.string(), 2, "not a cs extractor checkpoint");
  }
  CsExtractor e;
  e.event_dim_ = file.meta.at("event_dim").get<int>();
  e.depth_ = file.meta.at("depth").get<int>();
  e.w1_ = file.require("w1").data;
  e.b1_ = file.require("b1").data;
  if (e.depth_ == 2) {
    e.w2_ = file.require("w2").data;
    e.b2_ = file.require("b2").data;
  }
  e.anchor_ = file.require("anchor").data;
  e.frozen_ = true;  // checkpoints always hold trained, frozen extractors
  return e;
}

}  // namespace evrel
