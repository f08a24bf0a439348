#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace evrel {

// Half-open token index range [begin, end) within one sentence.
struct TokenSpan {
  int begin = 0;
  int end = 0;
  bool operator==(const TokenSpan&) const = default;
};

struct TextEvent {
  std::string id;
  int sentence_index = 0;
  TokenSpan trigger_span;
  std::string surface;  // space-joined tokens addressed by trigger_span
  bool operator==(const TextEvent&) const = default;
};

struct VideoEvent {
  std::string id;
  double start_s = 0.0;
  double end_s = 0.0;
  // Key into a frame-embedding cache, or a path to stored frames.
  std::optional<std::string> frame_ref;
  bool operator==(const VideoEvent&) const = default;
};

struct AsrSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
  bool operator==(const AsrSegment&) const = default;
};

enum class Label { Hierarchical, Identical, NoRel };

std::string_view to_string(Label label);
Label label_from_string(std::string_view s);

// Directed text-event -> video-event relation; no video->text records exist.
struct Relation {
  std::string text_event_id;
  std::string video_event_id;
  Label label = Label::NoRel;
  std::optional<double> confidence;  // in [0, 1]
  bool operator==(const Relation&) const = default;
};

struct Document {
  std::string doc_id;
  std::vector<std::vector<std::string>> sentences;
  double video_duration_s = 0.0;
  int description_word_count = 0;
  std::vector<TextEvent> text_events;
  std::vector<VideoEvent> video_events;
  std::vector<AsrSegment> asr_segments;  // stored, unused by this pipeline

  const TextEvent* find_text_event(std::string_view id) const;
  const VideoEvent* find_video_event(std::string_view id) const;
  bool operator==(const Document&) const = default;
};

struct MultimodalEventGraph {
  std::string doc_id;
  std::vector<Relation> relations;  // at most one record per (text, video) pair
};

struct Violation {
  std::string field;  // offending field, e.g. "video_events[2].end_s"
  std::string rule;   // violated rule, e.g. "start_s < end_s"
  std::string detail;
};

// Empty result iff every type invariant holds. Violations are data, not
// exceptions.
std::vector<Violation> validate_document(const Document& doc);

// Checks relation records against their owning document: dangling event ids,
// confidence range, duplicate (text, video) pairs.
std::vector<Violation> validate_relations(const Document& doc,
                                          const std::vector<Relation>& relations);

// All m*n (text_event_id, video_event_id) pairs: text events in document
// order (major), video events in temporal order (minor).
std::vector<std::pair<std::string, std::string>> pair_space(const Document& doc);

bool keep_document(const Document& doc, double max_duration_s = 840.0,
                   int min_desc_words = 10);
std::vector<Document> filter_corpus(const std::vector<Document>& docs,
                                    double max_duration_s = 840.0,
                                    int min_desc_words = 10);

// Corpus file: one JSON document per line, schema_version on every record.
void save_corpus(const std::vector<Document>& docs, const std::filesystem::path& path);
std::vector<Document> load_corpus(const std::filesystem::path& path);

// Relation/label file: one tab-separated record per line:
// doc_id, text_event_id, video_event_id, label, confidence, provenance.
struct RelationRecord {
  std::string doc_id;
  std::string text_event_id;
  std::string video_event_id;
  Label label = Label::NoRel;
  std::optional<double> confidence;
  std::string provenance;
  bool operator==(const RelationRecord&) const = default;
};

void save_relation_records(const std::vector<RelationRecord>& records,
                           const std::filesystem::path& path);
std::vector<RelationRecord> load_relation_records(const std::filesystem::path& path);

}  // namespace evrel
