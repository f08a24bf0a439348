#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "evrel/embedding.hpp"
#include "evrel/eventgraph.hpp"
#include "evrel/pseudolabel.hpp"

namespace evrel {

struct PairKey {
  std::string doc_id;
  std::string text_event_id;
  std::string video_event_id;
  auto operator<=>(const PairKey&) const = default;
};

// Mapping from pair key to label; keys missing from the map are NoRel.
using LabeledPairSet = std::map<PairKey, Label>;

LabeledPairSet to_labeled_pairs(const std::vector<RelationRecord>& records);
LabeledPairSet to_labeled_pairs(const std::vector<PseudoLabel>& labels);

struct PrfCounts {
  long true_positive = 0;
  long predicted = 0;
  long gold = 0;
};

struct TypeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  PrfCounts counts;
};

struct MetricReport {
  TypeMetrics hierarchical;
  TypeMetrics identical;
  double avg_f1 = 0.0;
};

// 2PR/(P+R); 0 when P+R = 0.
double f1_score(double precision, double recall);

TypeMetrics relation_prf(const LabeledPairSet& gold, const LabeledPairSet& pred,
                         Label type);

// Macro average of the two per-type F1 scores.
double avg_f1(double f1_hierarchical, double f1_identical);

MetricReport evaluate(const LabeledPairSet& gold, const LabeledPairSet& pred);

// Fraction of annotated relations marked by at least 2 annotators; inputs are
// the per-annotator relation sets for one relation type.
double iaa(const std::vector<std::set<PairKey>>& annotations);

// Seed-deterministic i.i.d. draws over the pairs from the given prior
// (Hierarchical, Identical, NoRel); NoRel draws stay implicit.
LabeledPairSet prior_baseline(const std::array<double, 3>& prior,
                              const std::vector<PairKey>& pairs, std::uint64_t seed);

// The pseudo-label generator applied at evaluation time.
LabeledPairSet mm_baseline(const std::vector<Document>& eval_corpus,
                           const TextHierPredictor& predictor, const JointEncoder& encoder,
                           const FrameStore& frames, const PseudoLabelOptions& options);

// IETe2Ve matching: a predicted text event matches a gold event iff their
// trigger spans overlap within the same sentence (or are equal, when
// exact_span is set). Each predicted event maps to the gold event with the
// largest overlap; ties resolve to the earliest gold event.
std::map<std::string, std::string> match_predicted_text_events(
    const std::vector<TextEvent>& gold_events,
    const std::vector<TextEvent>& predicted_events, bool exact_span = false);

// Rewrites prediction keys from predicted to matched gold text events.
// Relations on unmatched predicted events keep a sentinel key that can never
// hit gold (they count as false positives); colliding keys keep the first
// label in key order.
LabeledPairSet remap_predictions(
    const LabeledPairSet& predictions,
    const std::map<std::string, std::map<std::string, std::string>>& mapping_by_doc);

// Report files: machine-readable CSV and a fixed-width table, percentages to
// one decimal.
std::string render_pct(double value);  // 100x, one decimal
void write_metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows,
                       const std::filesystem::path& path);
std::vector<std::pair<std::string, MetricReport>> load_metrics_csv(
    const std::filesystem::path& path);
std::string render_metrics_table(
    const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace evrel
