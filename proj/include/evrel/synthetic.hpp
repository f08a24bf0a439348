#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evrel/embedding.hpp"
#include "evrel/eventgraph.hpp"
#include "evrel/pseudolabel.hpp"

namespace evrel {

// Desk-scale corpus generator: plants a concept-level event graph, renders it
// as documents plus frame embeddings, and keeps the semantic gold labels.
struct SyntheticSpec {
  int n_docs = 10;
  int text_events_min = 3;
  int text_events_max = 6;
  int video_events_min = 4;
  int video_events_max = 8;
  double hierarchy_density = 0.4;   // chance a text slot expands to parent + subevent
  double identical_density = 0.5;   // chance a video event mirrors a text event
  double textless_subevent_rate = 0.1;  // video subevents with no text mention
  double noise = 0.0;               // corruption rate for frames and hierarchy records
  std::uint64_t seed = 0;

  void check() const;
};

// Two-level concept forest shared by the generator and the toy KB fixture:
// parents map to their subevent concepts.
const std::map<std::string, std::vector<std::string>>& builtin_ontology();
const std::vector<std::string>& builtin_standalone_concepts();

// Every concept word, sorted; plant these into the toy encoder so that each
// pipeline stage sees the same concept geometry.
std::vector<std::string> planted_concept_tags();

struct SyntheticOutput {
  std::vector<Document> docs;
  std::vector<RelationRecord> gold;     // provenance "gold"
  std::vector<TextHierPair> text_hier;  // after noise dropout
  FrameStore frames;
};

// Planted Identical pairs are calibrated to score strictly above lambda and
// unrelated pairs strictly below it (before noise corruption is applied).
SyntheticOutput generate_synthetic(const SyntheticSpec& spec, const ToyEncoder& encoder,
                                   double lambda);

}  // namespace evrel
