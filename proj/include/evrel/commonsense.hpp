#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "evrel/embedding.hpp"

namespace evrel {

struct KbEdge {
  std::string relation;
  std::string head;
  std::string tail;
  bool operator==(const KbEdge&) const = default;
};

struct KbEventPair {
  std::string head_phrase;
  std::string tail_phrase;
  bool positive = true;
  bool operator==(const KbEventPair&) const = default;
};

// KB edge file: tab-separated (relation, head_phrase, tail_phrase).
std::vector<KbEdge> load_kb_edges(const std::filesystem::path& path);

const std::set<std::string>& default_subevent_relations();  // HasSubevent family

// Positives are exactly the edges whose relation is allowed; negatives are
// seed-deterministic random head/tail pairings that do not appear as
// positives, |negatives| = round(neg_ratio * |positives|).
std::vector<KbEventPair> extract_kb_pairs(
    const std::vector<KbEdge>& edges,
    const std::set<std::string>& allowed_relations, double neg_ratio,
    std::uint64_t seed);

struct CsConfig {
  int depth = 1;        // 1: single affine layer; 2: adds a tanh hidden layer
  double margin = 0.5;  // contrastive margin for negative pairs
  double lr = 0.05;
  int epochs = 200;
  double neg_ratio = 1.0;
  void check() const;
};

// Commonsense feature extractor CS(., .): maps the concatenated pair
// embedding [ft; cfv] (2d wide) to a fixed 512-dim feature. Trained once on
// KB pairs, then frozen; a frozen extractor rejects any weight update.
class CsExtractor {
 public:
  static constexpr int kFeatureDim = 512;

  CsExtractor() = default;
  CsExtractor(int event_dim, int depth, std::uint64_t seed);

  int event_dim() const { return event_dim_; }
  int input_dim() const { return 2 * event_dim_; }
  int depth() const { return depth_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // cs_ij = CS(ft_i, cfv_j); inputs concatenate in that order.
  Eigen::VectorXd features(const Embedding& ft, const Embedding& cfv) const;

  // Forward on an already-concatenated input; usable before freezing.
  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

  // Gradient of a downstream loss w.r.t. the (frozen) extractor input, given
  // the gradient w.r.t. its output. Lets callers backpropagate through CS
  // into the video feature without touching CS weights.
  Eigen::VectorXd input_gradient(const Eigen::VectorXd& input,
                                 const Eigen::VectorXd& dfeatures) const;

  const Eigen::MatrixXd& w1() const { return w1_; }
  const Eigen::VectorXd& b1() const { return b1_; }
  const Eigen::MatrixXd& w2() const { return w2_; }
  const Eigen::VectorXd& b2() const { return b2_; }
  const Eigen::VectorXd& anchor() const { return anchor_; }

  // Mutators reject updates once frozen.
  void set_w1(Eigen::MatrixXd w);
  void set_b1(Eigen::VectorXd b);
  void set_w2(Eigen::MatrixXd w);
  void set_b2(Eigen::VectorXd b);
  void set_anchor(Eigen::VectorXd a);

  void save(const std::filesystem::path& path) const;
  static CsExtractor load(const std::filesystem::path& path);

 private:
  void require_mutable() const;

  int event_dim_ = 0;
  int depth_ = 1;
  bool frozen_ = false;
  Eigen::MatrixXd w1_;  // depth 1: kFeatureDim x 2d; depth 2: hidden x 2d
  Eigen::VectorXd b1_;
  Eigen::MatrixXd w2_;  // depth 2 only: kFeatureDim x hidden
  Eigen::VectorXd b2_;
  Eigen::VectorXd anchor_;  // learned anchor direction for the contrastive loss
};

// Training batch: one row per KB pair, already embedded and concatenated.
struct CsBatch {
  Eigen::MatrixXd inputs;      // n x 2d
  std::vector<bool> positive;  // n flags
};

struct CsGradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  Eigen::VectorXd anchor;
};

// Margin-based contrastive loss over the batch: positives minimize the
// squared distance of their feature to the anchor, negatives pay
// max(0, margin - distance)^2. Returns the mean loss; fills gradients when
// requested.
double cs_loss(const CsExtractor& extractor, const CsBatch& batch, double margin,
               CsGradients* gradients = nullptr);

CsBatch embed_kb_pairs(const std::vector<KbEventPair>& pairs, const JointEncoder& encoder);

struct CsTrainResult {
  CsExtractor extractor;  // frozen
  double initial_loss = 0.0;
  std::vector<double> loss_history;  // one entry per epoch, after its update
};

CsTrainResult train_cs(const std::vector<KbEventPair>& pairs, const JointEncoder& encoder,
                       const CsConfig& config, std::uint64_t seed);

// cs_ij with the frozen-extractor precondition enforced.
Eigen::VectorXd cs_features(const Embedding& ft, const Embedding& cfv,
                            const CsExtractor& extractor);

}  // namespace evrel
