#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "evrel/embedding.hpp"
#include "evrel/eventgraph.hpp"

namespace evrel {

// Text-text hierarchy prediction: parent e_u contains subevent e_us.
struct TextHierPair {
  std::string doc_id;
  std::string parent_event_id;
  std::string sub_event_id;
  bool operator==(const TextHierPair&) const = default;
};

inline constexpr std::string_view kProvRetrieval = "retrieval";
inline constexpr std::string_view kProvPropagation = "propagation";
inline constexpr std::string_view kProvDirectMatch = "direct-match";

// Machine-generated relation instance; NoRel pairs stay implicit.
struct PseudoLabel {
  std::string doc_id;
  std::string text_event_id;
  std::string video_event_id;
  Label label = Label::Identical;  // Hierarchical or Identical only
  std::string provenance;          // retrieval | propagation | direct-match
  double score = 0.0;              // similarity at creation
  bool operator==(const PseudoLabel&) const = default;
};

// The external text-hierarchy model is pluggable: anything mapping a document
// to parent/subevent pairs.
class TextHierPredictor {
 public:
  virtual ~TextHierPredictor() = default;
  virtual std::vector<TextHierPair> predict(const Document& doc) const = 0;
};

// Fixture predictor that echoes a fixed table.
class TableHierPredictor : public TextHierPredictor {
 public:
  void add(std::string_view doc_id, std::string_view parent_id, std::string_view sub_id);
  std::vector<TextHierPair> predict(const Document& doc) const override;

 private:
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> table_;
};

// Reads (doc_id, parent_event_id, sub_event_id) tab-separated records.
class FileHierPredictor : public TextHierPredictor {
 public:
  static FileHierPredictor load(const std::filesystem::path& path);
  std::vector<TextHierPair> predict(const Document& doc) const override;

 private:
  TableHierPredictor table_;
};

enum class ConflictPolicy { IdenticalWins, HierarchicalWins, DropBoth };
ConflictPolicy conflict_policy_from_string(std::string_view s);
std::string_view to_string(ConflictPolicy policy);

// Runs the predictor and validates its output against the document.
std::vector<TextHierPair> detect_text_hierarchy(const Document& doc,
                                                const TextHierPredictor& predictor);

// Video events whose similarity with the text event strictly exceeds lambda.
std::vector<std::pair<std::string, double>> retrieve_identical(
    const Document& doc, const DocumentEmbeddings& embeddings,
    std::string_view text_event_id, double lambda, double scale = 100.0);

// One-hop transitivity: for every (e_u -> e_s) and Identical(e_s, v), emit
// Hierarchical(e_u, v).
std::vector<PseudoLabel> propagate_hierarchy(const std::vector<TextHierPair>& hier_pairs,
                                             const std::vector<PseudoLabel>& identical);

// Identical labels over all m*n pairs passing the threshold.
std::vector<PseudoLabel> direct_identical_match(const Document& doc,
                                                const DocumentEmbeddings& embeddings,
                                                double lambda, double scale = 100.0);

struct PseudoLabelOptions {
  double lambda = 30.39;
  ConflictPolicy conflict_policy = ConflictPolicy::IdenticalWins;
  bool multi_hop = false;  // transitive closure of text hierarchy before propagation
  int workers = 1;
};

struct PseudoLabelSet {
  std::vector<PseudoLabel> labels;
  long conflicts = 0;  // pairs that carried both labels before resolution
};

PseudoLabelSet generate_pseudo_labels(const std::vector<Document>& corpus,
                                      const TextHierPredictor& predictor,
                                      const JointEncoder& encoder,
                                      const FrameStore& frames,
                                      const PseudoLabelOptions& options);

// Pseudo-label file: doc_id, text_event_id, video_event_id, label,
// provenance, score — one tab-separated record per line.
void save_pseudo_labels(const std::vector<PseudoLabel>& labels,
                        const std::filesystem::path& path);
std::vector<PseudoLabel> load_pseudo_labels(const std::filesystem::path& path);

void save_text_hier_pairs(const std::vector<TextHierPair>& pairs,
                          const std::filesystem::path& path);

}  // namespace evrel
