#include "evrel/pseudolabel.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include "evrel/errors.hpp"
#include "evrel/util.hpp"

namespace evrel {

void TableHierPredictor::add(std::string_view doc_id, std::string_view parent_id,
                             std::string_view sub_id) {
  table_[std::string(doc_id)].emplace_back(std::string(parent_id), std::string(sub_id));
}

std::vector<TextHierPair> TableHierPredictor::predict(const Document& doc) const {
  std::vector<TextHierPair> out;
  const auto it = table_.find(doc.doc_id);
  if (it == table_.end()) return out;
  for (const auto& [parent, sub] : it->second) {
    out.push_back(TextHierPair{doc.doc_id, parent, sub});
  }
  return out;
}

FileHierPredictor FileHierPredictor::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  FileHierPredictor predictor;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 3) {
      throw ParseError(path.string(), line_no,
                       "expected 3 tab-separated fields, got " + std::to_string(cols.size()));
    }
    predictor.table_.add(cols[0], cols[1], cols[2]);
  }
  return predictor;
}

std::vector<TextHierPair> FileHierPredictor::predict(const Document& doc) const {
  return table_.predict(doc);
}

ConflictPolicy conflict_policy_from_string(std::string_view s) {
  if (s == "identical-wins") return ConflictPolicy::IdenticalWins;
  if (s == "hierarchical-wins") return ConflictPolicy::HierarchicalWins;
  if (s == "drop-both") return ConflictPolicy::DropBoth;
  throw ArgumentError("unknown conflict policy '" + std::string(s) + "'");
}

std::string_view to_string(ConflictPolicy policy) {
  switch (policy) {
    case ConflictPolicy::IdenticalWins: return "identical-wins";
    case ConflictPolicy::HierarchicalWins: return "hierarchical-wins";
    case ConflictPolicy::DropBoth: return "drop-both";
  }
  return "identical-wins";
}

std::vector<TextHierPair> detect_text_hierarchy(const Document& doc,
                                                const TextHierPredictor& predictor) {
  std::vector<TextHierPair> pairs;
  try {
    pairs = predictor.predict(doc);
  } catch (const std::exception& e) {
    throw PipelineError(doc.doc_id, std::string("text hierarchy predictor failed: ") + e.what());
  }
  for (const auto& p : pairs) {
    if (p.parent_event_id == p.sub_event_id) {
      throw ValidationError(doc.doc_id,
                            "text hierarchy pair with parent == subevent '" +
                                p.parent_event_id + "'");
    }
    if (!doc.find_text_event(p.parent_event_id)) {
      throw ValidationError(doc.doc_id, "hierarchy parent '" + p.parent_event_id +
                                            "' is not a text event");
    }
    if (!doc.find_text_event(p.sub_event_id)) {
      throw ValidationError(doc.doc_id,
                            "hierarchy subevent '" + p.sub_event_id + "' is not a text event");
    }
  }
  return pairs;
}

namespace {

int text_event_index(const Document& doc, std::string_view id) {
  for (std::size_t i = 0; i < doc.text_events.size(); ++i) {
    if (doc.text_events[i].id == id) return static_cast<int>(i);
  }
  throw ArgumentError("unknown text event '" + std::string(id) + "' in doc " + doc.doc_id);
}

}  // namespace

std::vector<std::pair<std::string, double>> retrieve_identical(
    const Document& doc, const DocumentEmbeddings& embeddings,
    std::string_view text_event_id, double lambda, double scale) {
  const int ti = text_event_index(doc, text_event_id);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t j = 0; j < doc.video_events.size(); ++j) {
    const double score =
        similarity(embeddings.text[static_cast<std::size_t>(ti)], embeddings.video[j], scale);
    if (score > lambda) out.emplace_back(doc.video_events[j].id, score);
  }
  return out;
}

std::vector<PseudoLabel> propagate_hierarchy(const std::vector<TextHierPair>& hier_pairs,
                                             const std::vector<PseudoLabel>& identical) {
  std::vector<PseudoLabel> out;
  std::set<std::tuple<std::string, std::string, std::string>> emitted;
  for (const auto& hp : hier_pairs) {
    for (const auto& id_label : identical) {
      if (id_label.label != Label::Identical) continue;
      if (id_label.doc_id != hp.doc_id) continue;
      if (id_label.text_event_id != hp.sub_event_id) continue;
      if (!emitted.insert({hp.doc_id, hp.parent_event_id, id_label.video_event_id}).second) {
        continue;
      }
      out.push_back(PseudoLabel{hp.doc_id, hp.parent_event_id, id_label.video_event_id,
                                Label::Hierarchical, std::string(kProvPropagation),
                                id_label.score});
    }
  }
  return out;
}

std::vector<PseudoLabel> direct_identical_match(const Document& doc,
                                                const DocumentEmbeddings& embeddings,
                                                double lambda, double scale) {
  std::vector<PseudoLabel> out;
  for (std::size_t i = 0; i < doc.text_events.size(); ++i) {
    for (std::size_t j = 0; j < doc.video_events.size(); ++j) {
      const double score = similarity(embeddings.text[i], embeddings.video[j], scale);
      if (score > lambda) {
        out.push_back(PseudoLabel{doc.doc_id, doc.text_events[i].id, doc.video_events[j].id,
                                  Label::Identical, std::string(kProvDirectMatch), score});
      }
    }
  }
  return out;
}

namespace {

std::vector<TextHierPair> transitive_closure(std::vector<TextHierPair> pairs) {
  // Warshall-style closure over the (small) per-document pair list.
  bool changed = true;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) seen.insert({p.parent_event_id, p.sub_event_id});
  while (changed) {
    changed = false;
    const auto snapshot = pairs;
    for (const auto& a : snapshot) {
      for (const auto& b : snapshot) {
        if (a.sub_event_id != b.parent_event_id) continue;
        if (a.parent_event_id == b.sub_event_id) continue;
        if (seen.insert({a.parent_event_id, b.sub_event_id}).second) {
          pairs.push_back(TextHierPair{a.doc_id, a.parent_event_id, b.sub_event_id});
          changed = true;
        }
      }
    }
  }
  return pairs;
}

struct DocLabels {
  std::vector<PseudoLabel> labels;
  long conflicts = 0;
};

DocLabels pseudo_labels_for_document(const Document& doc, const TextHierPredictor& predictor,
                                     const JointEncoder& encoder, const FrameStore& frames,
                                     const PseudoLabelOptions& options) {
  const double scale = 100.0;
  DocumentEmbeddings embeddings;
  try {
    embeddings = DocumentEmbeddings::compute(doc, encoder, frames);
  } catch (const std::exception& e) {
    throw PipelineError(doc.doc_id, e.what());
  }

  auto hier_pairs = detect_text_hierarchy(doc, predictor);
  if (options.multi_hop) hier_pairs = transitive_closure(std::move(hier_pairs));

  // Identical labels retrieved for hierarchy subevents; these feed the
  // propagation step.
  std::vector<PseudoLabel> retrieved;
  std::set<std::string> retrieved_subs;
  for (const auto& hp : hier_pairs) {
    if (!retrieved_subs.insert(hp.sub_event_id).second) continue;
    for (const auto& [video_id, score] :
         retrieve_identical(doc, embeddings, hp.sub_event_id, options.lambda, scale)) {
      retrieved.push_back(PseudoLabel{doc.doc_id, hp.sub_event_id, video_id,
                                      Label::Identical, std::string(kProvRetrieval), score});
    }
  }

  const auto propagated = propagate_hierarchy(hier_pairs, retrieved);
  const auto direct = direct_identical_match(doc, embeddings, options.lambda, scale);

  // Resolve per-pair: at most one label per (text, video) key. Identical
  // labels arriving from both retrieval and direct comparison deduplicate
  // with retrieval provenance kept (it is the label that took part in
  // propagation). Cross-label conflicts follow the configured policy.
  std::map<std::pair<std::string, std::string>, PseudoLabel> identical_by_pair;
  for (const auto& batch : {retrieved, direct}) {
    for (const auto& label : batch) {
      identical_by_pair.emplace(std::make_pair(label.text_event_id, label.video_event_id),
                                label);
    }
  }
  std::map<std::pair<std::string, std::string>, PseudoLabel> hierarchical_by_pair;
  for (const auto& label : propagated) {
    hierarchical_by_pair.emplace(std::make_pair(label.text_event_id, label.video_event_id),
                                 label);
  }

  DocLabels out;
  for (const auto& [key, label] : identical_by_pair) {
    const auto hier_it = hierarchical_by_pair.find(key);
    if (hier_it == hierarchical_by_pair.end()) {
      out.labels.push_back(label);
      continue;
    }
    ++out.conflicts;
    switch (options.conflict_policy) {
      case ConflictPolicy::IdenticalWins: out.labels.push_back(label); break;
      case ConflictPolicy::HierarchicalWins: out.labels.push_back(hier_it->second); break;
      case ConflictPolicy::DropBoth: break;
    }
    hierarchical_by_pair.erase(hier_it);
  }
  for (const auto& [key, label] : hierarchical_by_pair) {
    out.labels.push_back(label);
  }

  // Deterministic output order: pair_space order of the owning document.
  std::map<std::pair<std::string, std::string>, std::size_t> rank;
  const auto pairs = pair_space(doc);
  for (std::size_t i = 0; i < pairs.size(); ++i) rank[pairs[i]] = i;
  std::sort(out.labels.begin(), out.labels.end(),
            [&rank](const PseudoLabel& a, const PseudoLabel& b) {
              return rank.at({a.text_event_id, a.video_event_id}) <
                     rank.at({b.text_event_id, b.video_event_id});
            });
  return out;
}

}  // namespace

PseudoLabelSet generate_pseudo_labels(const std::vector<Document>& corpus,
                                      const TextHierPredictor& predictor,
                                      const JointEncoder& encoder, const FrameStore& frames,
                                      const PseudoLabelOptions& options) {
  std::vector<DocLabels> per_doc(corpus.size());
  const int workers = std::max(1, options.workers);
  if (workers == 1 || corpus.size() < 2) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      per_doc[i] = pseudo_labels_for_document(corpus[i], predictor, encoder, frames, options);
    }
  } else {
    // Per-document stages are independent; the reduction below stays
    // single-threaded and ordered for determinism.
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        try {
          while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= corpus.size()) break;
            per_doc[i] =
                pseudo_labels_for_document(corpus[i], predictor, encoder, frames, options);
          }
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  PseudoLabelSet result;
  for (const auto& doc_labels : per_doc) {
    result.conflicts += doc_labels.conflicts;
    result.labels.insert(result.labels.end(), doc_labels.labels.begin(),
                         doc_labels.labels.end());
  }
  return result;
}

void save_pseudo_labels(const std::vector<PseudoLabel>& labels,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  for (const auto& l : labels) {
    out << l.doc_id << '\t' << l.text_event_id << '\t' << l.video_event_id << '\t'
        << to_string(l.label) << '\t' << l.provenance << '\t' << format_double(l.score)
        << '\n';
  }
}

std::vector<PseudoLabel> load_pseudo_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::vector<PseudoLabel> labels;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 6) {
      throw ParseError(path.string(), line_no,
                       "expected 6 tab-separated fields, got " + std::to_string(cols.size()));
    }
    PseudoLabel l;
    l.doc_id = cols[0];
    l.text_event_id = cols[1];
    l.video_event_id = cols[2];
    try {
      l.label = label_from_string(cols[3]);
    } catch (const ArgumentError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    if (l.label == Label::NoRel) {
      throw ParseError(path.string(), line_no, "pseudo labels cannot carry NoRel");
    }
    l.provenance = cols[4];
    l.score = parse_double(cols[5], path.string(), line_no);
    labels.push_back(std::move(l));
  }
  return labels;
}

void save_text_hier_pairs(const std::vector<TextHierPair>& pairs,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  for (const auto& p : pairs) {
    out << p.doc_id << '\t' << p.parent_event_id << '\t' << p.sub_event_id << '\n';
  }
}

}  // namespace evrel
