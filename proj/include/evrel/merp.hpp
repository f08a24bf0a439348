#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evrel/commonsense.hpp"
#include "evrel/embedding.hpp"
#include "evrel/eventgraph.hpp"
#include "evrel/pseudolabel.hpp"

namespace evrel {

struct MerpConfig {
  int ct_layers = 1;
  int ct_heads = 4;
  int max_video_events = 77;  // CT truncates events beyond this cap
  int dim = 512;              // event embedding width d
  bool use_ct = true;
  bool use_cs = true;
  bool use_ei = true;
  double lr = 1e-5;
  int batch_size = 1024;
  int epochs = 15;
  double prune_threshold = 28.0;
  bool prune = true;
  double momentum = 0.9;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
  std::string optimizer = "sgd";  // "sgd" (reference) | "adam"
  double norel_ratio = -1.0;      // < 0: keep every unlabeled pair as NoRel
  double holdout_fraction = 0.1;  // slice reported in the training log
  int head_hidden = 0;            // 0: sqrt(3 * input_width) rule
  std::uint64_t seed = 0;

  void check() const;
  int head_input_width() const;
  int resolved_head_hidden() const;

  nlohmann::json to_json() const;
  static MerpConfig from_json(const nlohmann::json& j);
};

struct AttentionLayer {
  Eigen::MatrixXd wq, wk, wv, wo;  // d x d, applied as q_t = Wq x_t + bq
  Eigen::VectorXd bq, bk, bv, bo;
};

struct MerpModel {
  MerpConfig config;
  Eigen::MatrixXd pos;  // learned positions, max_video_events x d
  std::vector<AttentionLayer> ct;
  // The head standardizes its input per dimension (constants frozen at
  // training start) before the two trainable layers; the feature blocks have
  // very different natural scales.
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  Eigen::MatrixXd head_w1;  // hidden x input_width
  Eigen::VectorXd head_b1;
  Eigen::MatrixXd head_w2;  // 3 x hidden
  Eigen::VectorXd head_b2;
  CsExtractor cs;  // frozen commonsense extractor

  static MerpModel init(const MerpConfig& config, const CsExtractor& cs, std::uint64_t seed);

  void save(const std::filesystem::path& path) const;
  static MerpModel load(const std::filesystem::path& path);
};

// Gradient (or optimizer-state) storage shaped like the trainable parameters.
struct MerpGradients {
  Eigen::MatrixXd pos;
  std::vector<AttentionLayer> ct;
  Eigen::MatrixXd head_w1;
  Eigen::VectorXd head_b1;
  Eigen::MatrixXd head_w2;
  Eigen::VectorXd head_b2;

  static MerpGradients zeros_like(const MerpModel& model);
};

// Visits every trainable tensor of the model zipped with the matching tensors
// of the companion structures (gradients, momentum, ...).
template <typename F, typename... Companion>
void visit_parameters(MerpModel& model, F&& f, Companion&... companions) {
  f(model.pos, companions.pos...);
  for (std::size_t i = 0; i < model.ct.size(); ++i) {
    f(model.ct[i].wq, companions.ct[i].wq...);
    f(model.ct[i].wk, companions.ct[i].wk...);
    f(model.ct[i].wv, companions.ct[i].wv...);
    f(model.ct[i].wo, companions.ct[i].wo...);
    f(model.ct[i].bq, companions.ct[i].bq...);
    f(model.ct[i].bk, companions.ct[i].bk...);
    f(model.ct[i].bv, companions.ct[i].bv...);
    f(model.ct[i].bo, companions.ct[i].bo...);
  }
  f(model.head_w1, companions.head_w1...);
  f(model.head_b1, companions.head_b1...);
  f(model.head_w2, companions.head_w2...);
  f(model.head_b2, companions.head_b2...);
}

// Intermediate activations kept for the backward pass.
struct CtCache {
  std::vector<Eigen::MatrixXd> x;  // x[0] = input + positions, x[L] = output
  std::vector<Eigen::MatrixXd> q, k, v, o;
  std::vector<std::vector<Eigen::MatrixXd>> attn;  // [layer][head], n x n
};

// Contextual transformer over the first min(n, cap) video rows; positions are
// added before attention, each layer is residual multi-head self-attention.
Eigen::MatrixXd ct_forward(const MerpModel& model, const Eigen::MatrixXd& video_rows,
                           CtCache* cache = nullptr);
void ct_backward(const MerpModel& model, const CtCache& cache,
                 const Eigen::MatrixXd& doutput, MerpGradients& grads);

// Public contextualize surface: rows of `video_embs` in temporal order;
// outputs align 1:1 with the first min(n, cap) inputs.
std::vector<Embedding> contextualize(const std::vector<Embedding>& video_embs,
                                     const MerpModel& model);

// sf = ft - cfv, mf = ft ⊙ cfv.
std::pair<Embedding, Embedding> interaction_features(const Embedding& ft,
                                                     const Embedding& cfv);

struct PairFeatures {
  Embedding ft;
  Embedding cfv;
  Embedding cs;  // empty when the CS block is toggled off
  Embedding sf;  // empty when EI is toggled off
  Embedding mf;
};

PairFeatures assemble_features(const Embedding& ft, const Embedding& cfv,
                               const MerpModel& model);
Eigen::VectorXd concat_features(const PairFeatures& features);

// Probability triple over (Hierarchical, Identical, NoRel).
Eigen::Vector3d classify_pair(const PairFeatures& features, const MerpModel& model);

struct LabelCounts {
  long hierarchical = 0;
  long identical = 0;
  long norel = 0;
  long total() const { return hierarchical + identical + norel; }
};

// w_c = total / (3 * count_c); each example's loss is multiplied by the
// weight of its class.
Eigen::Vector3d class_weights(const LabelCounts& counts);

struct EpochStats {
  double weighted_loss = 0.0;
  double acc_hierarchical = 0.0;
  double acc_identical = 0.0;
  double acc_norel = 0.0;
};

struct MerpTrainResult {
  MerpModel model;
  std::vector<EpochStats> history;  // one entry per epoch
  LabelCounts train_counts;
  Eigen::Vector3d weights;
};

MerpTrainResult train_merp(const std::vector<Document>& corpus,
                           const std::vector<PseudoLabel>& labels,
                           const JointEncoder& encoder, const FrameStore& frames,
                           const CsExtractor& cs, const MerpConfig& config);

void save_train_log(const std::vector<EpochStats>& history,
                    const std::filesystem::path& path);

// One argmax label per pair; NoRel pairs are omitted from the relation set.
MultimodalEventGraph predict_graph(const Document& doc, const MerpModel& model,
                                   const JointEncoder& encoder, const FrameStore& frames,
                                   bool prune);

// Relabels Identical predictions scoring under the threshold as NoRel (i.e.
// drops them); Hierarchical and NoRel predictions pass through untouched.
std::vector<RelationRecord> prune_identical(
    const std::vector<RelationRecord>& predictions,
    const std::function<double(const RelationRecord&)>& similarity_of,
    double threshold);
MultimodalEventGraph prune_identical(const MultimodalEventGraph& graph, const Document& doc,
                                     const DocumentEmbeddings& embeddings, double threshold,
                                     double scale = 100.0);

}  // namespace evrel
