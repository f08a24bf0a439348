#include "evrel/eventgraph.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "evrel/errors.hpp"
#include "evrel/util.hpp"

namespace evrel {

namespace {
constexpr int kCorpusSchemaVersion = 1;
}

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Hierarchical: return "Hierarchical";
    case Label::Identical: return "Identical";
    case Label::NoRel: return "NoRel";
  }
  return "NoRel";
}

Label label_from_string(std::string_view s) {
  if (s == "Hierarchical") return Label::Hierarchical;
  if (s == "Identical") return Label::Identical;
  if (s == "NoRel") return Label::NoRel;
  throw ArgumentError("unknown relation label '" + std::string(s) + "'");
}

const TextEvent* Document::find_text_event(std::string_view id) const {
  for (const auto& e : text_events) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

const VideoEvent* Document::find_video_event(std::string_view id) const {
  for (const auto& v : video_events) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

std::vector<Violation> validate_document(const Document& doc) {
  std::vector<Violation> out;
  const auto add = [&out](std::string field, std::string rule, std::string detail) {
    out.push_back(Violation{std::move(field), std::move(rule), std::move(detail)});
  };

  if (doc.doc_id.empty()) add("doc_id", "non-empty", "document id is empty");

  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < doc.text_events.size(); ++i) {
    const auto& e = doc.text_events[i];
    const std::string field = "text_events[" + std::to_string(i) + "]";
    if (!ids.insert(e.id).second) {
      add(field + ".id", "unique event ids", "duplicate id '" + e.id + "'");
    }
    if (e.sentence_index < 0 ||
        e.sentence_index >= static_cast<int>(doc.sentences.size())) {
      add(field + ".sentence_index", "sentence exists",
          "index " + std::to_string(e.sentence_index) + " out of range");
      continue;
    }
    const auto& sentence = doc.sentences[static_cast<std::size_t>(e.sentence_index)];
    const int len = static_cast<int>(sentence.size());
    if (e.trigger_span.begin >= e.trigger_span.end) {
      add(field + ".trigger_span", "non-empty span",
          "begin " + std::to_string(e.trigger_span.begin) + " >= end " +
              std::to_string(e.trigger_span.end));
    } else if (e.trigger_span.begin < 0 || e.trigger_span.end > len) {
      add(field + ".trigger_span", "span within sentence bounds",
          "span [" + std::to_string(e.trigger_span.begin) + ", " +
              std::to_string(e.trigger_span.end) + ") vs sentence length " +
              std::to_string(len));
    } else {
      std::vector<std::string> tokens(
          sentence.begin() + e.trigger_span.begin,
          sentence.begin() + e.trigger_span.end);
      const std::string expected = join(tokens, " ");
      if (e.surface != expected) {
        add(field + ".surface", "surface equals spanned tokens",
            "'" + e.surface + "' != '" + expected + "'");
      }
    }
  }

  double prev_end = -1.0;
  for (std::size_t j = 0; j < doc.video_events.size(); ++j) {
    const auto& v = doc.video_events[j];
    const std::string field = "video_events[" + std::to_string(j) + "]";
    if (!ids.insert(v.id).second) {
      add(field + ".id", "unique event ids", "duplicate id '" + v.id + "'");
    }
    if (v.start_s < 0.0) {
      add(field + ".start_s", "start_s >= 0", format_double(v.start_s));
    }
    if (!(v.start_s < v.end_s)) {
      add(field, "start_s < end_s",
          "[" + format_double(v.start_s) + ", " + format_double(v.end_s) + ")");
    }
    if (v.end_s > doc.video_duration_s) {
      add(field + ".end_s", "end_s <= video duration",
          format_double(v.end_s) + " > " + format_double(doc.video_duration_s));
    }
    if (j > 0) {
      if (v.start_s < doc.video_events[j - 1].start_s) {
        add(field + ".start_s", "video events sorted by start_s", v.id);
      }
      if (v.start_s < prev_end) {
        add(field, "video events non-overlapping",
            v.id + " overlaps " + doc.video_events[j - 1].id);
      }
    }
    prev_end = std::max(prev_end, v.end_s);
  }

  if (doc.description_word_count < 0) {
    add("description_word_count", "non-negative",
        std::to_string(doc.description_word_count));
  }
  return out;
}

std::vector<Violation> validate_relations(const Document& doc,
                                          const std::vector<Relation>& relations) {
  std::vector<Violation> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t k = 0; k < relations.size(); ++k) {
    const auto& r = relations[k];
    const std::string field = "relations[" + std::to_string(k) + "]";
    if (!doc.find_text_event(r.text_event_id)) {
      out.push_back({field + ".text_event_id", "dangling id", r.text_event_id});
    }
    if (!doc.find_video_event(r.video_event_id)) {
      out.push_back({field + ".video_event_id", "dangling id", r.video_event_id});
    }
    if (r.confidence && (*r.confidence < 0.0 || *r.confidence > 1.0)) {
      out.push_back({field + ".confidence", "confidence in [0,1]",
                     format_double(*r.confidence)});
    }
    if (!seen.insert({r.text_event_id, r.video_event_id}).second) {
      out.push_back({field, "one relation per pair",
                     r.text_event_id + " -> " + r.video_event_id});
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> pair_space(const Document& doc) {
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(doc.text_events.size() * doc.video_events.size());
  for (const auto& e : doc.text_events) {
    for (const auto& v : doc.video_events) {
      pairs.emplace_back(e.id, v.id);
    }
  }
  return pairs;
}

bool keep_document(const Document& doc, double max_duration_s, int min_desc_words) {
  return doc.video_duration_s <= max_duration_s &&
         doc.description_word_count >= min_desc_words;
}

std::vector<Document> filter_corpus(const std::vector<Document>& docs,
                                    double max_duration_s, int min_desc_words) {
  std::vector<Document> kept;
  for (const auto& doc : docs) {
    if (keep_document(doc, max_duration_s, min_desc_words)) kept.push_back(doc);
  }
  return kept;
}

namespace {

nlohmann::json doc_to_json(const Document& doc) {
  nlohmann::json j;
  j["schema_version"] = kCorpusSchemaVersion;
  j["doc_id"] = doc.doc_id;
  j["sentences"] = doc.sentences;
  j["video_duration_s"] = doc.video_duration_s;
  j["description_word_count"] = doc.description_word_count;
  j["text_events"] = nlohmann::json::array();
  for (const auto& e : doc.text_events) {
    j["text_events"].push_back({{"id", e.id},
                                {"sentence_index", e.sentence_index},
                                {"trigger_begin", e.trigger_span.begin},
                                {"trigger_end", e.trigger_span.end},
                                {"surface", e.surface}});
  }
  j["video_events"] = nlohmann::json::array();
  for (const auto& v : doc.video_events) {
    nlohmann::json ev{{"id", v.id}, {"start_s", v.start_s}, {"end_s", v.end_s}};
    if (v.frame_ref) ev["frame_ref"] = *v.frame_ref;
    j["video_events"].push_back(std::move(ev));
  }
  if (!doc.asr_segments.empty()) {
    j["asr_segments"] = nlohmann::json::array();
    for (const auto& seg : doc.asr_segments) {
      j["asr_segments"].push_back(
          {{"start_s", seg.start_s}, {"end_s", seg.end_s}, {"text", seg.text}});
    }
  }
  return j;
}

Document doc_from_json(const nlohmann::json& j) {
  Document doc;
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.sentences = j.at("sentences").get<std::vector<std::vector<std::string>>>();
  doc.video_duration_s = j.at("video_duration_s").get<double>();
  doc.description_word_count = j.at("description_word_count").get<int>();
  for (const auto& ej : j.at("text_events")) {
    TextEvent e;
    e.id = ej.at("id").get<std::string>();
    e.sentence_index = ej.at("sentence_index").get<int>();
    e.trigger_span.begin = ej.at("trigger_begin").get<int>();
    e.trigger_span.end = ej.at("trigger_end").get<int>();
    e.surface = ej.at("surface").get<std::string>();
    doc.text_events.push_back(std::move(e));
  }
  for (const auto& vj : j.at("video_events")) {
    VideoEvent v;
    v.id = vj.at("id").get<std::string>();
    v.start_s = vj.at("start_s").get<double>();
    v.end_s = vj.at("end_s").get<double>();
    if (vj.contains("frame_ref")) v.frame_ref = vj.at("frame_ref").get<std::string>();
    doc.video_events.push_back(std::move(v));
  }
  if (j.contains("asr_segments")) {
    for (const auto& sj : j.at("asr_segments")) {
      doc.asr_segments.push_back(AsrSegment{sj.at("start_s").get<double>(),
                                            sj.at("end_s").get<double>(),
                                            sj.at("text").get<std::string>()});
    }
  }
  return doc;
}

}  // namespace

void save_corpus(const std::vector<Document>& docs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  for (const auto& doc : docs) {
    out << doc_to_json(doc).dump() << '\n';
  }
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::vector<Document> docs;
  std::unordered_set<std::string> doc_ids;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Document doc;
    try {
      const auto j = nlohmann::json::parse(line);
      const int version = j.value("schema_version", 0);
      if (version != kCorpusSchemaVersion) {
        throw ParseError(path.string(), line_no,
                         "unsupported schema_version " + std::to_string(version));
      }
      doc = doc_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    const auto violations = validate_document(doc);
    if (!violations.empty()) {
      throw ValidationError(doc.doc_id, violations.front().field + ": violates '" +
                                            violations.front().rule + "' (" +
                                            violations.front().detail + ")");
    }
    if (!doc_ids.insert(doc.doc_id).second) {
      throw ValidationError(doc.doc_id, "duplicate doc_id in corpus");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_relation_records(const std::vector<RelationRecord>& records,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    out << r.doc_id << '\t' << r.text_event_id << '\t' << r.video_event_id << '\t'
        << to_string(r.label) << '\t'
        << (r.confidence ? format_double(*r.confidence) : std::string("-")) << '\t'
        << r.provenance << '\n';
  }
}

std::vector<RelationRecord> load_relation_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::vector<RelationRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 6) {
      throw ParseError(path.string(), line_no,
                       "expected 6 tab-separated fields, got " +
                           std::to_string(cols.size()));
    }
    RelationRecord r;
    r.doc_id = cols[0];
    r.text_event_id = cols[1];
    r.video_event_id = cols[2];
    try {
      r.label = label_from_string(cols[3]);
    } catch (const ArgumentError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    if (cols[4] != "-") r.confidence = parse_double(cols[4], path.string(), line_no);
    r.provenance = cols[5];
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace evrel
