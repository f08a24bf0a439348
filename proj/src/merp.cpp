#include "evrel/merp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "evrel/errors.hpp"
#include "evrel/rng.hpp"
#include "evrel/tensorfile.hpp"
#include "evrel/util.hpp"

namespace evrel {

void MerpConfig::check() const {
  if (ct_layers < 1) throw ArgumentError("ct_layers must be >= 1");
  if (ct_heads < 1) throw ArgumentError("ct_heads must be >= 1");
  if (dim < 2) throw ArgumentError("dim must be >= 2");
  if (dim % ct_heads != 0) throw ArgumentError("ct_heads must divide dim");
  if (max_video_events < 1) throw ArgumentError("max_video_events must be >= 1");
  if (!(lr > 0.0)) throw ArgumentError("lr must be > 0");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("momentum must be in [0, 1)");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
    throw ArgumentError("holdout_fraction must be in [0, 1)");
  }
  if (optimizer != "sgd" && optimizer != "adam") {
    throw ArgumentError("optimizer must be 'sgd' or 'adam'");
  }
}

int MerpConfig::head_input_width() const {
  int width = 2 * dim;
  if (use_cs) width += CsExtractor::kFeatureDim;
  if (use_ei) width += 2 * dim;
  return width;
}

int MerpConfig::resolved_head_hidden() const {
  if (head_hidden > 0) return head_hidden;
  return std::max(3, static_cast<int>(std::lround(std::sqrt(3.0 * head_input_width()))));
}

nlohmann::json MerpConfig::to_json() const {
  return nlohmann::json{{"ct_layers", ct_layers},
                        {"ct_heads", ct_heads},
                        {"max_video_events", max_video_events},
                        {"dim", dim},
                        {"use_ct", use_ct},
                        {"use_cs", use_cs},
                        {"use_ei", use_ei},
                        {"lr", lr},
                        {"batch_size", batch_size},
                        {"epochs", epochs},
                        {"prune_threshold", prune_threshold},
                        {"prune", prune},
                        {"momentum", momentum},
                        {"clip_norm", clip_norm},
                        {"optimizer", optimizer},
                        {"norel_ratio", norel_ratio},
                        {"holdout_fraction", holdout_fraction},
                        {"head_hidden", head_hidden},
                        {"seed", seed}};
}

MerpConfig MerpConfig::from_json(const nlohmann::json& j) {
  MerpConfig c;
  c.ct_layers = j.value("ct_layers", c.ct_layers);
  c.ct_heads = j.value("ct_heads", c.ct_heads);
  c.max_video_events = j.value("max_video_events", c.max_video_events);
  c.dim = j.value("dim", c.dim);
  c.use_ct = j.value("use_ct", c.use_ct);
  c.use_cs = j.value("use_cs", c.use_cs);
  c.use_ei = j.value("use_ei", c.use_ei);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
  c.prune = j.value("prune", c.prune);
  c.momentum = j.value("momentum", c.momentum);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.norel_ratio = j.value("norel_ratio", c.norel_ratio);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

Eigen::MatrixXd gaussian_matrix(rng::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  }
  return m;
}

int index_of_label(Label label) {
  switch (label) {
    case Label::Hierarchical: return 0;
    case Label::Identical: return 1;
    case Label::NoRel: return 2;
  }
  return 2;
}

Label label_of_index(int index) {
  if (index == 0) return Label::Hierarchical;
  if (index == 1) return Label::Identical;
  return Label::NoRel;
}

int argmax3(const Eigen::Vector3d& v) {
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

struct HeadActivation {
  Eigen::VectorXd z;
  Eigen::VectorXd hidden;
  Eigen::Vector3d logits;
  Eigen::Vector3d probs;
};

HeadActivation head_forward(const MerpModel& model, Eigen::VectorXd z) {
  if (z.size() != model.head_w1.cols()) {
    throw ArgumentError("feature width " + std::to_string(z.size()) +
                        " does not match classifier input width " +
                        std::to_string(model.head_w1.cols()));
  }
  HeadActivation act;
  act.z = ((z - model.feature_mean).array() / model.feature_std.array()).matrix();
  act.hidden = (model.head_w1 * act.z + model.head_b1).array().tanh();
  act.logits = model.head_w2 * act.hidden + model.head_b2;
  const double mx = act.logits.maxCoeff();
  const Eigen::Vector3d ex = (act.logits.array() - mx).exp();
  act.probs = ex / ex.sum();
  return act;
}

}  // namespace

MerpModel MerpModel::init(const MerpConfig& config, const CsExtractor& cs,
                          std::uint64_t seed) {
  config.check();
  if (config.use_cs) {
    if (!cs.frozen()) throw ConfigError("commonsense extractor must be frozen");
    if (cs.event_dim() != config.dim) {
      throw ConfigError("commonsense extractor dim " + std::to_string(cs.event_dim()) +
                        " != model dim " + std::to_string(config.dim));
    }
  }
  MerpModel model;
  model.config = config;
  model.cs = cs;

  rng::Rng rng(rng::substream(seed, "merp.init"));
  const int d = config.dim;
  // Zero-initialized output projections make each residual layer an exact
  // identity at the start of training; attention only contributes once its
  // gradients say so.
  model.pos = gaussian_matrix(rng, config.max_video_events, d, 0.02);
  model.ct.resize(static_cast<std::size_t>(config.ct_layers));
  for (auto& layer : model.ct) {
    layer.wq = gaussian_matrix(rng, d, d, 0.02);
    layer.wk = gaussian_matrix(rng, d, d, 0.02);
    layer.wv = gaussian_matrix(rng, d, d, 0.02);
    layer.wo = Eigen::MatrixXd::Zero(d, d);
    layer.bq = Eigen::VectorXd::Zero(d);
    layer.bk = Eigen::VectorXd::Zero(d);
    layer.bv = Eigen::VectorXd::Zero(d);
    layer.bo = Eigen::VectorXd::Zero(d);
  }
  const int in = config.head_input_width();
  const int hidden = config.resolved_head_hidden();
  model.feature_mean = Eigen::VectorXd::Zero(in);
  model.feature_std = Eigen::VectorXd::Ones(in);
  model.head_w1 = gaussian_matrix(rng, hidden, in, 1.0 / std::sqrt(static_cast<double>(in)));
  model.head_b1 = Eigen::VectorXd::Zero(hidden);
  model.head_w2 = gaussian_matrix(rng, 3, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
  model.head_b2 = Eigen::VectorXd::Zero(3);
  return model;
}

MerpGradients MerpGradients::zeros_like(const MerpModel& model) {
  MerpGradients g;
  g.pos = Eigen::MatrixXd::Zero(model.pos.rows(), model.pos.cols());
  g.ct.resize(model.ct.size());
  for (std::size_t i = 0; i < model.ct.size(); ++i) {
    const auto& l = model.ct[i];
    g.ct[i].wq = Eigen::MatrixXd::Zero(l.wq.rows(), l.wq.cols());
    g.ct[i].wk = Eigen::MatrixXd::Zero(l.wk.rows(), l.wk.cols());
    g.ct[i].wv = Eigen::MatrixXd::Zero(l.wv.rows(), l.wv.cols());
    g.ct[i].wo = Eigen::MatrixXd::Zero(l.wo.rows(), l.wo.cols());
    g.ct[i].bq = Eigen::VectorXd::Zero(l.bq.size());
    g.ct[i].bk = Eigen::VectorXd::Zero(l.bk.size());
    g.ct[i].bv = Eigen::VectorXd::Zero(l.bv.size());
    g.ct[i].bo = Eigen::VectorXd::Zero(l.bo.size());
  }
  g.head_w1 = Eigen::MatrixXd::Zero(model.head_w1.rows(), model.head_w1.cols());
  g.head_b1 = Eigen::VectorXd::Zero(model.head_b1.size());
  g.head_w2 = Eigen::MatrixXd::Zero(model.head_w2.rows(), model.head_w2.cols());
  g.head_b2 = Eigen::VectorXd::Zero(model.head_b2.size());
  return g;
}

Eigen::MatrixXd ct_forward(const MerpModel& model, const Eigen::MatrixXd& video_rows,
                           CtCache* cache) {
  const auto& cfg = model.config;
  if (video_rows.rows() == 0) {
    throw ArgumentError("contextualize needs at least one video event");
  }
  if (video_rows.cols() != cfg.dim) {
    throw ArgumentError("video embedding width " + std::to_string(video_rows.cols()) +
                        " != model dim " + std::to_string(cfg.dim));
  }
  const Eigen::Index n =
      std::min<Eigen::Index>(video_rows.rows(), cfg.max_video_events);
  const int heads = cfg.ct_heads;
  const Eigen::Index dk = cfg.dim / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Eigen::MatrixXd x = video_rows.topRows(n) + model.pos.topRows(n);
  if (cache) {
    *cache = CtCache{};
    cache->x.push_back(x);
  }
  for (const auto& layer : model.ct) {
    Eigen::MatrixXd q = x * layer.wq.transpose();
    q.rowwise() += layer.bq.transpose();
    Eigen::MatrixXd k = x * layer.wk.transpose();
    k.rowwise() += layer.bk.transpose();
    Eigen::MatrixXd v = x * layer.wv.transpose();
    v.rowwise() += layer.bv.transpose();

    Eigen::MatrixXd o(n, cfg.dim);
    std::vector<Eigen::MatrixXd> attn_heads;
    attn_heads.reserve(static_cast<std::size_t>(heads));
    for (int a = 0; a < heads; ++a) {
      const Eigen::MatrixXd qa = q.middleCols(a * dk, dk);
      const Eigen::MatrixXd ka = k.middleCols(a * dk, dk);
      const Eigen::MatrixXd va = v.middleCols(a * dk, dk);
      const Eigen::MatrixXd scores = qa * ka.transpose() * inv_sqrt_dk;
      Eigen::MatrixXd attn(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const double mx = scores.row(r).maxCoeff();
        const Eigen::ArrayXd ex = (scores.row(r).transpose().array() - mx).exp();
        attn.row(r) = (ex / ex.sum()).matrix().transpose();
      }
      o.middleCols(a * dk, dk) = attn * va;
      attn_heads.push_back(std::move(attn));
    }

    Eigen::MatrixXd y = x + o * layer.wo.transpose();
    y.rowwise() += layer.bo.transpose();
    if (cache) {
      cache->q.push_back(std::move(q));
      cache->k.push_back(std::move(k));
      cache->v.push_back(std::move(v));
      cache->o.push_back(o);
      cache->attn.push_back(std::move(attn_heads));
      cache->x.push_back(y);
    }
    x = std::move(y);
  }
  return x;
}

void ct_backward(const MerpModel& model, const CtCache& cache,
                 const Eigen::MatrixXd& doutput, MerpGradients& grads) {
  const auto& cfg = model.config;
  const int heads = cfg.ct_heads;
  const Eigen::Index dk = cfg.dim / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const Eigen::Index n = doutput.rows();

  Eigen::MatrixXd dy = doutput;
  for (int l = static_cast<int>(model.ct.size()) - 1; l >= 0; --l) {
    const auto& layer = model.ct[static_cast<std::size_t>(l)];
    auto& glayer = grads.ct[static_cast<std::size_t>(l)];
    const auto& x = cache.x[static_cast<std::size_t>(l)];

    Eigen::MatrixXd dx = dy;  // residual path
    glayer.wo += dy.transpose() * cache.o[static_cast<std::size_t>(l)];
    glayer.bo += dy.colwise().sum().transpose();
    const Eigen::MatrixXd dout_proj = dy * layer.wo;

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n, cfg.dim);
    Eigen::MatrixXd dkm = Eigen::MatrixXd::Zero(n, cfg.dim);
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(n, cfg.dim);
    for (int a = 0; a < heads; ++a) {
      const Eigen::MatrixXd doa = dout_proj.middleCols(a * dk, dk);
      const auto& attn = cache.attn[static_cast<std::size_t>(l)][static_cast<std::size_t>(a)];
      const Eigen::MatrixXd va =
          cache.v[static_cast<std::size_t>(l)].middleCols(a * dk, dk);
      const Eigen::MatrixXd qa =
          cache.q[static_cast<std::size_t>(l)].middleCols(a * dk, dk);
      const Eigen::MatrixXd ka =
          cache.k[static_cast<std::size_t>(l)].middleCols(a * dk, dk);

      const Eigen::MatrixXd dattn = doa * va.transpose();
      dv.middleCols(a * dk, dk) = attn.transpose() * doa;

      Eigen::MatrixXd dscores(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const double dot = dattn.row(r).dot(attn.row(r));
        dscores.row(r) =
            (attn.row(r).array() * (dattn.row(r).array() - dot)).matrix();
      }
      dscores *= inv_sqrt_dk;
      dq.middleCols(a * dk, dk) = dscores * ka;
      dkm.middleCols(a * dk, dk) = dscores.transpose() * qa;
    }

    glayer.wq += dq.transpose() * x;
    glayer.bq += dq.colwise().sum().transpose();
    glayer.wk += dkm.transpose() * x;
    glayer.bk += dkm.colwise().sum().transpose();
    glayer.wv += dv.transpose() * x;
    glayer.bv += dv.colwise().sum().transpose();

    dx += dq * layer.wq + dkm * layer.wk + dv * layer.wv;
    dy = std::move(dx);
  }
  grads.pos.topRows(n) += dy;
}

std::vector<Embedding> contextualize(const std::vector<Embedding>& video_embs,
                                     const MerpModel& model) {
  if (video_embs.empty()) {
    throw ArgumentError("contextualize needs at least one video event");
  }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(video_embs.size()), model.config.dim);
  for (std::size_t j = 0; j < video_embs.size(); ++j) {
    if (video_embs[j].size() != model.config.dim) {
      throw ArgumentError("video embedding dimension mismatch");
    }
    rows.row(static_cast<Eigen::Index>(j)) = video_embs[j].transpose();
  }
  const Eigen::MatrixXd out = ct_forward(model, rows);
  std::vector<Embedding> result;
  result.reserve(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index j = 0; j < out.rows(); ++j) {
    result.push_back(out.row(j).transpose());
  }
  return result;
}

std::pair<Embedding, Embedding> interaction_features(const Embedding& ft,
                                                     const Embedding& cfv) {
  if (ft.size() != cfv.size()) {
    throw ArgumentError("interaction features need equal dimensions");
  }
  return {ft - cfv, ft.cwiseProduct(cfv)};
}

PairFeatures assemble_features(const Embedding& ft, const Embedding& cfv,
                               const MerpModel& model) {
  const auto& cfg = model.config;
  if (ft.size() != cfg.dim || cfv.size() != cfg.dim) {
    throw ArgumentError("pair features expect " + std::to_string(cfg.dim) +
                        "-dimensional inputs");
  }
  PairFeatures f;
  f.ft = ft;
  f.cfv = cfv;
  if (cfg.use_cs) f.cs = cs_features(ft, cfv, model.cs);
  if (cfg.use_ei) std::tie(f.sf, f.mf) = interaction_features(ft, cfv);
  return f;
}

Eigen::VectorXd concat_features(const PairFeatures& features) {
  Eigen::Index width = features.ft.size() + features.cfv.size() + features.cs.size() +
                       features.sf.size() + features.mf.size();
  Eigen::VectorXd z(width);
  Eigen::Index off = 0;
  for (const Embedding* block : {&features.ft, &features.cfv, &features.cs, &features.sf,
                                 &features.mf}) {
    if (block->size() == 0) continue;
    z.segment(off, block->size()) = *block;
    off += block->size();
  }
  return z;
}

Eigen::Vector3d classify_pair(const PairFeatures& features, const MerpModel& model) {
  return head_forward(model, concat_features(features)).probs;
}

Eigen::Vector3d class_weights(const LabelCounts& counts) {
  if (counts.hierarchical <= 0 || counts.identical <= 0 || counts.norel <= 0) {
    throw ArgumentError("class_weights requires every label count > 0");
  }
  const double total = static_cast<double>(counts.total());
  return Eigen::Vector3d(total / (3.0 * counts.hierarchical),
                         total / (3.0 * counts.identical),
                         total / (3.0 * counts.norel));
}

namespace {

struct TrainExample {
  int doc = 0;
  int text = 0;
  int video = 0;
  Label label = Label::NoRel;
};

struct DocData {
  std::vector<Embedding> ft;
  Eigen::MatrixXd video_rows;  // n x d
};

// Returns the batch-mean weighted cross-entropy and accumulates gradients.
double batch_backward(const MerpModel& model, const std::vector<DocData>& docs,
                      const std::vector<TrainExample>& examples,
                      const std::vector<int>& batch_ids, const Eigen::Vector3d& weights,
                      MerpGradients& grads) {
  const auto& cfg = model.config;
  const double inv_batch = 1.0 / static_cast<double>(batch_ids.size());

  // Group by document, ascending, so accumulation order is fixed.
  std::map<int, std::vector<int>> by_doc;
  for (int id : batch_ids) by_doc[examples[static_cast<std::size_t>(id)].doc].push_back(id);

  double total = 0.0;
  for (const auto& [doc_index, ids] : by_doc) {
    const DocData& dd = docs[static_cast<std::size_t>(doc_index)];
    const Eigen::Index nc =
        std::min<Eigen::Index>(dd.video_rows.rows(), cfg.max_video_events);
    CtCache cache;
    Eigen::MatrixXd ct_out;
    Eigen::MatrixXd dcfv;
    if (cfg.use_ct) {
      ct_out = ct_forward(model, dd.video_rows, &cache);
      dcfv = Eigen::MatrixXd::Zero(nc, cfg.dim);
    }

    for (int id : ids) {
      const auto& ex = examples[static_cast<std::size_t>(id)];
      const Embedding& ft = dd.ft[static_cast<std::size_t>(ex.text)];
      const bool contextual = cfg.use_ct && ex.video < nc;
      const Embedding cfv = contextual
                                ? Embedding(ct_out.row(ex.video).transpose())
                                : Embedding(dd.video_rows.row(ex.video).transpose());

      const PairFeatures pf = assemble_features(ft, cfv, model);
      HeadActivation act = head_forward(model, concat_features(pf));
      const int y = index_of_label(ex.label);
      const double w = weights[y];

      const double mx = act.logits.maxCoeff();
      const double lse = mx + std::log((act.logits.array() - mx).exp().sum());
      total += w * inv_batch * (lse - act.logits[y]);

      Eigen::Vector3d dlogits = act.probs;
      dlogits[y] -= 1.0;
      dlogits *= w * inv_batch;

      grads.head_w2 += dlogits * act.hidden.transpose();
      grads.head_b2 += dlogits;
      const Eigen::VectorXd dh = model.head_w2.transpose() * dlogits;
      const Eigen::VectorXd da1 =
          (dh.array() * (1.0 - act.hidden.array().square())).matrix();
      grads.head_w1 += da1 * act.z.transpose();
      grads.head_b1 += da1;

      if (!contextual) continue;  // no parameter path into the raw feature
      // gradient w.r.t. the raw concatenated features (undo standardization)
      const Eigen::VectorXd dz =
          ((model.head_w1.transpose() * da1).array() / model.feature_std.array()).matrix();
      Eigen::VectorXd dc = dz.segment(cfg.dim, cfg.dim);
      Eigen::Index off = 2 * cfg.dim;
      if (cfg.use_cs) {
        const Eigen::VectorXd dcs = dz.segment(off, CsExtractor::kFeatureDim);
        Eigen::VectorXd input(2 * cfg.dim);
        input << ft, cfv;
        dc += model.cs.input_gradient(input, dcs).tail(cfg.dim);
        off += CsExtractor::kFeatureDim;
      }
      if (cfg.use_ei) {
        const Eigen::VectorXd dsf = dz.segment(off, cfg.dim);
        off += cfg.dim;
        const Eigen::VectorXd dmf = dz.segment(off, cfg.dim);
        dc -= dsf;
        dc += dmf.cwiseProduct(ft);
      }
      dcfv.row(ex.video) += dc.transpose();
    }

    if (cfg.use_ct) ct_backward(model, cache, dcfv, grads);
  }
  return total;
}

Eigen::Vector3d predict_example(const MerpModel& model, const DocData& dd,
                                const Eigen::MatrixXd* ct_out, const TrainExample& ex) {
  const auto& cfg = model.config;
  const Eigen::Index nc =
      std::min<Eigen::Index>(dd.video_rows.rows(), cfg.max_video_events);
  const Embedding& ft = dd.ft[static_cast<std::size_t>(ex.text)];
  const Embedding cfv =
      (cfg.use_ct && ex.video < nc && ct_out)
          ? Embedding(ct_out->row(ex.video).transpose())
          : Embedding(dd.video_rows.row(ex.video).transpose());
  return classify_pair(assemble_features(ft, cfv, model), model);
}

}  // namespace

MerpTrainResult train_merp(const std::vector<Document>& corpus,
                           const std::vector<PseudoLabel>& labels,
                           const JointEncoder& encoder, const FrameStore& frames,
                           const CsExtractor& cs, const MerpConfig& config) {
  config.check();
  if (encoder.dim() != config.dim) {
    throw ConfigError("encoder dim " + std::to_string(encoder.dim()) + " != model dim " +
                      std::to_string(config.dim));
  }
  if (labels.empty()) throw ArgumentError("no pseudo labels to train on");

  // Encoders are frozen throughout training, so event embeddings are cached
  // once per document.
  std::vector<DocData> docs(corpus.size());
  std::map<std::string, int> doc_index;
  std::vector<std::map<std::string, int>> text_index(corpus.size());
  std::vector<std::map<std::string, int>> video_index(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    doc_index[corpus[i].doc_id] = static_cast<int>(i);
    const auto emb = DocumentEmbeddings::compute(corpus[i], encoder, frames);
    docs[i].ft = emb.text;
    docs[i].video_rows.resize(static_cast<Eigen::Index>(emb.video.size()), config.dim);
    for (std::size_t j = 0; j < emb.video.size(); ++j) {
      docs[i].video_rows.row(static_cast<Eigen::Index>(j)) = emb.video[j].transpose();
    }
    for (std::size_t t = 0; t < corpus[i].text_events.size(); ++t) {
      text_index[i][corpus[i].text_events[t].id] = static_cast<int>(t);
    }
    for (std::size_t v = 0; v < corpus[i].video_events.size(); ++v) {
      video_index[i][corpus[i].video_events[v].id] = static_cast<int>(v);
    }
  }

  std::vector<TrainExample> examples;
  std::set<std::tuple<int, int, int>> labeled;
  for (const auto& label : labels) {
    const auto dit = doc_index.find(label.doc_id);
    if (dit == doc_index.end()) {
      throw ValidationError(label.doc_id, "pseudo label references unknown document");
    }
    const int d = dit->second;
    const auto tit = text_index[static_cast<std::size_t>(d)].find(label.text_event_id);
    const auto vit = video_index[static_cast<std::size_t>(d)].find(label.video_event_id);
    if (tit == text_index[static_cast<std::size_t>(d)].end() ||
        vit == video_index[static_cast<std::size_t>(d)].end()) {
      throw ValidationError(label.doc_id, "pseudo label references unknown event");
    }
    if (!labeled.insert({d, tit->second, vit->second}).second) {
      throw ValidationError(label.doc_id, "duplicate pseudo label for pair " +
                                              label.text_event_id + " -> " +
                                              label.video_event_id);
    }
    examples.push_back(TrainExample{d, tit->second, vit->second, label.label});
  }

  // NoRel pairs are materialized lazily here: pair_space minus labeled pairs.
  std::vector<TrainExample> norel;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int m = static_cast<int>(corpus[i].text_events.size());
    const int n = static_cast<int>(corpus[i].video_events.size());
    for (int t = 0; t < m; ++t) {
      for (int v = 0; v < n; ++v) {
        if (!labeled.count({static_cast<int>(i), t, v})) {
          norel.push_back(TrainExample{static_cast<int>(i), t, v, Label::NoRel});
        }
      }
    }
  }
  if (config.norel_ratio >= 0.0) {
    const auto wanted = std::min<std::size_t>(
        norel.size(), static_cast<std::size_t>(std::llround(
                          config.norel_ratio * static_cast<double>(examples.size()))));
    rng::Rng r(rng::substream(config.seed, "merp.norel"));
    r.shuffle(norel);
    norel.resize(wanted);
  }
  examples.insert(examples.end(), norel.begin(), norel.end());

  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  rng::Rng holdout_rng(rng::substream(config.seed, "merp.holdout"));
  holdout_rng.shuffle(order);
  const auto holdout_n = static_cast<std::size_t>(
      config.holdout_fraction * static_cast<double>(order.size()));
  std::vector<int> holdout(order.begin(),
                           order.begin() + static_cast<std::ptrdiff_t>(holdout_n));
  std::vector<int> train_ids(order.begin() + static_cast<std::ptrdiff_t>(holdout_n),
                             order.end());
  if (train_ids.empty()) throw ArgumentError("no training examples after holdout split");

  MerpTrainResult result;
  for (int id : train_ids) {
    switch (examples[static_cast<std::size_t>(id)].label) {
      case Label::Hierarchical: ++result.train_counts.hierarchical; break;
      case Label::Identical: ++result.train_counts.identical; break;
      case Label::NoRel: ++result.train_counts.norel; break;
    }
  }
  result.weights = class_weights(result.train_counts);

  MerpModel model = MerpModel::init(config, cs, config.seed);

  // Freeze the head's input standardization from the initial feature
  // distribution over the training slice.
  {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(config.head_input_width());
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(config.head_input_width());
    std::map<int, std::vector<int>> stats_by_doc;
    for (int id : train_ids) {
      stats_by_doc[examples[static_cast<std::size_t>(id)].doc].push_back(id);
    }
    for (const auto& [doc_idx, ids] : stats_by_doc) {
      const DocData& dd = docs[static_cast<std::size_t>(doc_idx)];
      const Eigen::Index nc =
          std::min<Eigen::Index>(dd.video_rows.rows(), config.max_video_events);
      Eigen::MatrixXd ct_out;
      if (config.use_ct) ct_out = ct_forward(model, dd.video_rows);
      for (int id : ids) {
        const auto& ex = examples[static_cast<std::size_t>(id)];
        const Embedding cfv = (config.use_ct && ex.video < nc)
                                  ? Embedding(ct_out.row(ex.video).transpose())
                                  : Embedding(dd.video_rows.row(ex.video).transpose());
        const Eigen::VectorXd z = concat_features(
            assemble_features(dd.ft[static_cast<std::size_t>(ex.text)], cfv, model));
        sum += z;
        sumsq += z.cwiseProduct(z);
      }
    }
    const double n = static_cast<double>(train_ids.size());
    model.feature_mean = sum / n;
    model.feature_std = ((sumsq / n) - model.feature_mean.cwiseProduct(model.feature_mean))
                            .cwiseMax(0.0)
                            .cwiseSqrt()
                            .cwiseMax(1e-6);
  }

  MerpGradients velocity = MerpGradients::zeros_like(model);
  MerpGradients adam_m = MerpGradients::zeros_like(model);
  MerpGradients adam_v = MerpGradients::zeros_like(model);
  long adam_t = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng::Rng shuffle_rng(
        rng::substream(config.seed, "merp.shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(train_ids);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_ids.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(train_ids.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::vector<int> batch_ids(train_ids.begin() + static_cast<std::ptrdiff_t>(start),
                                       train_ids.begin() + static_cast<std::ptrdiff_t>(stop));
      MerpGradients grads = MerpGradients::zeros_like(model);
      const double batch_loss =
          batch_backward(model, docs, examples, batch_ids, result.weights, grads);
      loss_sum += batch_loss * static_cast<double>(batch_ids.size());

      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        visit_parameters(
            model, [&sq](auto&, const auto& grad) { sq += grad.squaredNorm(); }, grads);
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) {
          const double scale = config.clip_norm / norm;
          visit_parameters(
              model, [scale](auto&, auto& grad) { grad *= scale; }, grads);
        }
      }

      if (config.optimizer == "sgd") {
        const double lr = config.lr;
        const double mu = config.momentum;
        visit_parameters(
            model,
            [lr, mu](auto& param, const auto& grad, auto& vel) {
              vel = mu * vel - lr * grad;
              param += vel;
            },
            grads, velocity);
      } else {
        ++adam_t;
        const double lr = config.lr;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
        visit_parameters(
            model,
            [&](auto& param, const auto& grad, auto& m, auto& v) {
              m = b1 * m + (1.0 - b1) * grad;
              v = b2 * v.array().matrix() + (1.0 - b2) * grad.array().square().matrix();
              param.array() -=
                  lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
            },
            grads, adam_m, adam_v);
      }
    }

    EpochStats stats;
    stats.weighted_loss = loss_sum / static_cast<double>(train_ids.size());

    // Per-class accuracy (recall) on the held-out slice.
    long correct[3] = {0, 0, 0};
    long seen[3] = {0, 0, 0};
    std::map<int, std::vector<int>> holdout_by_doc;
    for (int id : holdout) holdout_by_doc[examples[static_cast<std::size_t>(id)].doc].push_back(id);
    for (const auto& [doc_idx, ids] : holdout_by_doc) {
      const DocData& dd = docs[static_cast<std::size_t>(doc_idx)];
      Eigen::MatrixXd ct_out;
      if (config.use_ct) ct_out = ct_forward(model, dd.video_rows);
      for (int id : ids) {
        const auto& ex = examples[static_cast<std::size_t>(id)];
        const auto probs =
            predict_example(model, dd, config.use_ct ? &ct_out : nullptr, ex);
        const int y = index_of_label(ex.label);
        ++seen[y];
        if (argmax3(probs) == y) ++correct[y];
      }
    }
    stats.acc_hierarchical = seen[0] ? static_cast<double>(correct[0]) / seen[0] : 0.0;
    stats.acc_identical = seen[1] ? static_cast<double>(correct[1]) / seen[1] : 0.0;
    stats.acc_norel = seen[2] ? static_cast<double>(correct[2]) / seen[2] : 0.0;
    result.history.push_back(stats);
  }

  result.model = std::move(model);
  return result;
}

void save_train_log(const std::vector<EpochStats>& history,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  out << "epoch,weighted_loss,acc_hierarchical,acc_identical,acc_norel\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    out << e << ',' << format_double(history[e].weighted_loss) << ','
        << format_double(history[e].acc_hierarchical) << ','
        << format_double(history[e].acc_identical) << ','
        << format_double(history[e].acc_norel) << '\n';
  }
}

MultimodalEventGraph predict_graph(const Document& doc, const MerpModel& model,
                                   const JointEncoder& encoder, const FrameStore& frames,
                                   bool prune) {
  const auto& cfg = model.config;
  if (encoder.dim() != cfg.dim) {
    throw ConfigError("encoder dim " + std::to_string(encoder.dim()) + " != model dim " +
                      std::to_string(cfg.dim));
  }
  MultimodalEventGraph graph;
  graph.doc_id = doc.doc_id;
  if (doc.text_events.empty() || doc.video_events.empty()) return graph;

  const auto emb = DocumentEmbeddings::compute(doc, encoder, frames);
  Eigen::MatrixXd video_rows(static_cast<Eigen::Index>(emb.video.size()), cfg.dim);
  for (std::size_t j = 0; j < emb.video.size(); ++j) {
    video_rows.row(static_cast<Eigen::Index>(j)) = emb.video[j].transpose();
  }
  const Eigen::Index nc = std::min<Eigen::Index>(video_rows.rows(), cfg.max_video_events);
  Eigen::MatrixXd ct_out;
  if (cfg.use_ct) ct_out = ct_forward(model, video_rows);

  for (std::size_t i = 0; i < doc.text_events.size(); ++i) {
    for (std::size_t j = 0; j < doc.video_events.size(); ++j) {
      const Embedding cfv =
          (cfg.use_ct && static_cast<Eigen::Index>(j) < nc)
              ? Embedding(ct_out.row(static_cast<Eigen::Index>(j)).transpose())
              : Embedding(video_rows.row(static_cast<Eigen::Index>(j)).transpose());
      const auto probs = classify_pair(assemble_features(emb.text[i], cfv, model), model);
      const int best = argmax3(probs);
      const Label label = label_of_index(best);
      if (label == Label::NoRel) continue;
      if (prune && label == Label::Identical &&
          similarity(emb.text[i], emb.video[j]) < cfg.prune_threshold) {
        continue;  // relabeled NoRel by the ensemble filter
      }
      graph.relations.push_back(Relation{doc.text_events[i].id, doc.video_events[j].id,
                                         label, probs[best]});
    }
  }
  return graph;
}

std::vector<RelationRecord> prune_identical(
    const std::vector<RelationRecord>& predictions,
    const std::function<double(const RelationRecord&)>& similarity_of,
    double threshold) {
  std::vector<RelationRecord> out;
  out.reserve(predictions.size());
  for (const auto& r : predictions) {
    if (r.label == Label::Identical && similarity_of(r) < threshold) continue;
    out.push_back(r);
  }
  return out;
}

MultimodalEventGraph prune_identical(const MultimodalEventGraph& graph, const Document& doc,
                                     const DocumentEmbeddings& embeddings, double threshold,
                                     double scale) {
  std::map<std::string, std::size_t> text_idx, video_idx;
  for (std::size_t i = 0; i < doc.text_events.size(); ++i) text_idx[doc.text_events[i].id] = i;
  for (std::size_t j = 0; j < doc.video_events.size(); ++j) video_idx[doc.video_events[j].id] = j;

  MultimodalEventGraph out;
  out.doc_id = graph.doc_id;
  for (const auto& r : graph.relations) {
    if (r.label == Label::Identical) {
      const double sim = similarity(embeddings.text.at(text_idx.at(r.text_event_id)),
                                    embeddings.video.at(video_idx.at(r.video_event_id)),
                                    scale);
      if (sim < threshold) continue;
    }
    out.relations.push_back(r);
  }
  return out;
}

void MerpModel::save(const std::filesystem::path& path) const {
  io::TensorFile file;
  file.meta = {{"format", "merp-model"}, {"version", 1}, {"config", config.to_json()}};
  file.add("pos", pos);
  for (std::size_t l = 0; l < ct.size(); ++l) {
    const std::string prefix = "ct." + std::to_string(l) + ".";
    file.add(prefix + "wq", ct[l].wq);
    file.add(prefix + "wk", ct[l].wk);
    file.add(prefix + "wv", ct[l].wv);
    file.add(prefix + "wo", ct[l].wo);
    file.add(prefix + "bq", ct[l].bq);
    file.add(prefix + "bk", ct[l].bk);
    file.add(prefix + "bv", ct[l].bv);
    file.add(prefix + "bo", ct[l].bo);
  }
  file.add("feature_mean", feature_mean);
  file.add("feature_std", feature_std);
  file.add("head.w1", head_w1);
  file.add("head.b1", head_b1);
  file.add("head.w2", head_w2);
  file.add("head.b2", head_b2);
  if (cs.event_dim() > 0) {
    file.meta["cs"] = {{"event_dim", cs.event_dim()}, {"depth", cs.depth()}};
    file.add("cs.w1", cs.w1());
    file.add("cs.b1", cs.b1());
    if (cs.depth() == 2) {
      file.add("cs.w2", cs.w2());
      file.add("cs.b2", cs.b2());
    }
    file.add("cs.anchor", cs.anchor());
  }
  file.save(path);
}

MerpModel MerpModel::load(const std::filesystem::path& path) {
  const auto file = io::TensorFile::load(path);
  if (file.meta.value("format", "") != "merp-model") {
    throw ParseError(path.string(), 2, "not a merp model checkpoint");
  }
  MerpModel model;
  model.config = MerpConfig::from_json(file.meta.at("config"));
  model.pos = file.require("pos").data;
  model.ct.resize(static_cast<std::size_t>(model.config.ct_layers));
  for (std::size_t l = 0; l < model.ct.size(); ++l) {
    const std::string prefix = "ct." + std::to_string(l) + ".";
    model.ct[l].wq = file.require(prefix + "wq").data;
    model.ct[l].wk = file.require(prefix + "wk").data;
    model.ct[l].wv = file.require(prefix + "wv").data;
    model.ct[l].wo = file.require(prefix + "wo").data;
    model.ct[l].bq = file.require(prefix + "bq").data;
    model.ct[l].bk = file.require(prefix + "bk").data;
    model.ct[l].bv = file.require(prefix + "bv").data;
    model.ct[l].bo = file.require(prefix + "bo").data;
  }
  model.feature_mean = file.require("feature_mean").data;
  model.feature_std = file.require("feature_std").data;
  model.head_w1 = file.require("head.w1").data;
  model.head_b1 = file.require("head.b1").data;
  model.head_w2 = file.require("head.w2").data;
  model.head_b2 = file.require("head.b2").data;
  if (file.meta.contains("cs")) {
    const auto& cs_meta = file.meta.at("cs");
    CsExtractor cs(cs_meta.at("event_dim").get<int>(), cs_meta.at("depth").get<int>(), 0);
    cs.set_w1(file.require("cs.w1").data);
    cs.set_b1(file.require("cs.b1").data);
    if (cs.depth() == 2) {
      cs.set_w2(file.require("cs.w2").data);
      cs.set_b2(file.require("cs.b2").data);
    }
    cs.set_anchor(file.require("cs.anchor").data);
    cs.freeze();
    model.cs = std::move(cs);
  }
  return model;
}

}  // namespace evrel
