#include "evrel/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "evrel/errors.hpp"
#include "evrel/rng.hpp"
#include "evrel/util.hpp"

namespace evrel {

LabeledPairSet to_labeled_pairs(const std::vector<RelationRecord>& records) {
  LabeledPairSet set;
  for (const auto& r : records) {
    const PairKey key{r.doc_id, r.text_event_id, r.video_event_id};
    const auto [it, inserted] = set.emplace(key, r.label);
    if (!inserted && it->second != r.label) {
      throw ValidationError(r.doc_id, "conflicting labels for pair " + r.text_event_id +
                                          " -> " + r.video_event_id);
    }
  }
  return set;
}

LabeledPairSet to_labeled_pairs(const std::vector<PseudoLabel>& labels) {
  LabeledPairSet set;
  for (const auto& l : labels) {
    const PairKey key{l.doc_id, l.text_event_id, l.video_event_id};
    const auto [it, inserted] = set.emplace(key, l.label);
    if (!inserted && it->second != l.label) {
      throw ValidationError(l.doc_id, "conflicting labels for pair " + l.text_event_id +
                                          " -> " + l.video_event_id);
    }
  }
  return set;
}

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  if (denom <= 0.0) return 0.0;
  return 2.0 * precision * recall / denom;
}

TypeMetrics relation_prf(const LabeledPairSet& gold, const LabeledPairSet& pred,
                         Label type) {
  TypeMetrics m;
  for (const auto& [key, label] : pred) {
    if (label != type) continue;
    ++m.counts.predicted;
    const auto it = gold.find(key);
    if (it != gold.end() && it->second == type) ++m.counts.true_positive;
  }
  for (const auto& [key, label] : gold) {
    if (label == type) ++m.counts.gold;
  }
  m.precision = m.counts.predicted
                    ? static_cast<double>(m.counts.true_positive) / m.counts.predicted
                    : 0.0;
  m.recall = m.counts.gold
                 ? static_cast<double>(m.counts.true_positive) / m.counts.gold
                 : 0.0;
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

double avg_f1(double f1_hierarchical, double f1_identical) {
  return 0.5 * (f1_hierarchical + f1_identical);
}

MetricReport evaluate(const LabeledPairSet& gold, const LabeledPairSet& pred) {
  MetricReport report;
  report.hierarchical = relation_prf(gold, pred, Label::Hierarchical);
  report.identical = relation_prf(gold, pred, Label::Identical);
  report.avg_f1 = avg_f1(report.hierarchical.f1, report.identical.f1);
  return report;
}

double iaa(const std::vector<std::set<PairKey>>& annotations) {
  if (annotations.size() < 2) {
    throw ArgumentError("iaa needs at least 2 annotators");
  }
  std::map<PairKey, int> marks;
  for (const auto& set : annotations) {
    for (const auto& key : set) ++marks[key];
  }
  if (marks.empty()) return 0.0;
  long agreed = 0;
  for (const auto& [key, count] : marks) {
    if (count >= 2) ++agreed;
  }
  return static_cast<double>(agreed) / static_cast<double>(marks.size());
}

LabeledPairSet prior_baseline(const std::array<double, 3>& prior,
                              const std::vector<PairKey>& pairs, std::uint64_t seed) {
  double total = 0.0;
  for (double p : prior) {
    if (p < 0.0) throw ArgumentError("prior probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("prior must sum to 1");

  rng::Rng rng(rng::substream(seed, "prior.baseline"));
  LabeledPairSet out;
  for (const auto& key : pairs) {
    const double u = rng.uniform();
    Label label = Label::NoRel;
    if (u < prior[0]) {
      label = Label::Hierarchical;
    } else if (u < prior[0] + prior[1]) {
      label = Label::Identical;
    }
    if (label != Label::NoRel) out.emplace(key, label);
  }
  return out;
}

LabeledPairSet mm_baseline(const std::vector<Document>& eval_corpus,
                           const TextHierPredictor& predictor, const JointEncoder& encoder,
                           const FrameStore& frames, const PseudoLabelOptions& options) {
  const auto set = generate_pseudo_labels(eval_corpus, predictor, encoder, frames, options);
  return to_labeled_pairs(set.labels);
}

namespace {

int span_overlap(const TokenSpan& a, const TokenSpan& b) {
  return std::min(a.end, b.end) - std::max(a.begin, b.begin);
}

}  // namespace

std::map<std::string, std::string> match_predicted_text_events(
    const std::vector<TextEvent>& gold_events,
    const std::vector<TextEvent>& predicted_events, bool exact_span) {
  std::map<std::string, std::string> mapping;
  for (const auto& pred : predicted_events) {
    const TextEvent* best = nullptr;
    int best_overlap = 0;
    for (const auto& gold : gold_events) {
      if (gold.sentence_index != pred.sentence_index) continue;
      if (exact_span) {
        if (gold.trigger_span == pred.trigger_span) {
          best = &gold;
          break;
        }
        continue;
      }
      const int overlap = span_overlap(gold.trigger_span, pred.trigger_span);
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = &gold;
      }
    }
    if (best) mapping[pred.id] = best->id;
  }
  return mapping;
}

LabeledPairSet remap_predictions(
    const LabeledPairSet& predictions,
    const std::map<std::string, std::map<std::string, std::string>>& mapping_by_doc) {
  LabeledPairSet out;
  for (const auto& [key, label] : predictions) {
    PairKey mapped = key;
    const auto doc_it = mapping_by_doc.find(key.doc_id);
    const auto* doc_map = doc_it == mapping_by_doc.end() ? nullptr : &doc_it->second;
    const auto ev_it = doc_map ? doc_map->find(key.text_event_id)
                               : std::map<std::string, std::string>::const_iterator{};
    if (doc_map && ev_it != doc_map->end()) {
      mapped.text_event_id = ev_it->second;
    } else {
      // Unmatched predicted event: keep the relation as an unmatchable key so
      // it still counts against precision.
      mapped.text_event_id = "__unmatched__:" + key.text_event_id;
    }
    out.emplace(mapped, label);  // collisions keep the first label in key order
  }
  return out;
}

std::string render_pct(double value) {
  // Decimal half-up at one decimal place. Rounding the binary double directly
  // misrenders values meant as x.x5 (11.35 is stored as 11.3499...), so snap
  // to four decimals first and round in integer space.
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", 100.0 * value);
  std::string s = buf;
  bool negative = false;
  if (!s.empty() && s[0] == '-') {
    negative = true;
    s.erase(0, 1);
  }
  const auto dot = s.find('.');
  const long long units = std::stoll(s.substr(0, dot)) * 10000 + std::stoll(s.substr(dot + 1));
  const long long tenths = (units + 500) / 1000;
  std::string out = std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
  if (negative && tenths != 0) out.insert(out.begin(), '-');
  return out;
}

void write_metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  out << "name,p_hier,r_hier,f1_hier,p_ident,r_ident,f1_ident,avg_f1\n";
  for (const auto& [name, report] : rows) {
    out << name << ',' << format_double(report.hierarchical.precision) << ','
        << format_double(report.hierarchical.recall) << ','
        << format_double(report.hierarchical.f1) << ','
        << format_double(report.identical.precision) << ','
        << format_double(report.identical.recall) << ','
        << format_double(report.identical.f1) << ',' << format_double(report.avg_f1)
        << '\n';
  }
}

std::vector<std::pair<std::string, MetricReport>> load_metrics_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::vector<std::pair<std::string, MetricReport>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("name,", 0) == 0) continue;  // header
    const auto cols = split(line, ',');
    if (cols.size() != 8) {
      throw ParseError(path.string(), line_no,
                       "expected 8 comma-separated fields, got " +
                           std::to_string(cols.size()));
    }
    MetricReport report;
    report.hierarchical.precision = parse_double(cols[1], path.string(), line_no);
    report.hierarchical.recall = parse_double(cols[2], path.string(), line_no);
    report.hierarchical.f1 = parse_double(cols[3], path.string(), line_no);
    report.identical.precision = parse_double(cols[4], path.string(), line_no);
    report.identical.recall = parse_double(cols[5], path.string(), line_no);
    report.identical.f1 = parse_double(cols[6], path.string(), line_no);
    report.avg_f1 = parse_double(cols[7], path.string(), line_no);
    rows.emplace_back(cols[0], report);
  }
  return rows;
}

std::string render_metrics_table(
    const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::size_t name_width = 5;  // "Model"
  for (const auto& [name, report] : rows) name_width = std::max(name_width, name.size());

  std::ostringstream out;
  const auto pad = [](const std::string& s, std::size_t width) {
    return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
  };
  const auto cell = [](const std::string& s) {
    constexpr std::size_t width = 7;
    return std::string(width > s.size() ? width - s.size() : 0, ' ') + s;
  };
  const auto center = [](const std::string& s, std::size_t width) {
    if (s.size() >= width) return s;
    const std::size_t left = (width - s.size()) / 2;
    return std::string(left, ' ') + s + std::string(width - s.size() - left, ' ');
  };

  out << pad("", name_width) << "  " << center("Hierarchical", 21) << "  "
      << center("Identical", 21) << '\n';
  out << pad("Model", name_width) << "  " << cell("P") << cell("R") << cell("F1")
      << "  " << cell("P") << cell("R") << cell("F1") << "  " << cell("Avg F1") << '\n';
  for (const auto& [name, report] : rows) {
    out << pad(name, name_width) << "  " << cell(render_pct(report.hierarchical.precision))
        << cell(render_pct(report.hierarchical.recall))
        << cell(render_pct(report.hierarchical.f1)) << "  "
        << cell(render_pct(report.identical.precision))
        << cell(render_pct(report.identical.recall))
        << cell(render_pct(report.identical.f1)) << "  " << cell(render_pct(report.avg_f1))
        << '\n';
  }
  return out.str();
}

}  // namespace evrel
