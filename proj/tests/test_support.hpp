#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evrel/eventgraph.hpp"
#include "evrel/rng.hpp"
#include "evrel/synthetic.hpp"

namespace evrel::test {

// Toy encoder with the builtin concept tags planted, matching what the
// pipeline stages construct.
inline ToyEncoder planted_encoder(std::uint64_t seed, int dim) {
  EncoderConfig cfg;
  cfg.dim = dim;
  ToyEncoder encoder(seed, cfg);
  encoder.plant_concepts(planted_concept_tags());
  return encoder;
}

// Scratch directory unique to the calling test binary, wiped on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("evrel_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// A small well-formed document: `m` single-trigger sentences and `n`
// consecutive two-second shots.
inline Document make_document(const std::string& doc_id, int m, int n) {
  Document doc;
  doc.doc_id = doc_id;
  doc.description_word_count = 25;
  for (int t = 0; t < m; ++t) {
    doc.sentences.push_back({"the", "word" + std::to_string(t), "happened"});
    TextEvent e;
    e.id = "e" + std::to_string(t);
    e.sentence_index = t;
    e.trigger_span = TokenSpan{1, 2};
    e.surface = "word" + std::to_string(t);
    doc.text_events.push_back(e);
  }
  for (int v = 0; v < n; ++v) {
    VideoEvent ve;
    ve.id = "v" + std::to_string(v);
    ve.start_s = 2.0 * v;
    ve.end_s = 2.0 * v + 2.0;
    doc.video_events.push_back(ve);
  }
  doc.video_duration_s = 2.0 * n + 1.0;
  return doc;
}

// Random valid document for property tests.
inline Document random_document(rng::Rng& rng, const std::string& doc_id) {
  const int m = static_cast<int>(rng.uniform_int(0, 5));
  const int n = static_cast<int>(rng.uniform_int(0, 6));
  Document doc = make_document(doc_id, std::max(m, 1), std::max(n, 1));
  if (m == 0) doc.text_events.clear();
  if (n == 0) doc.video_events.clear();
  // vary spans and sentences a little
  for (auto& e : doc.text_events) {
    const int len = 2 + static_cast<int>(rng.uniform_int(0, 4));
    std::vector<std::string> sentence;
    for (int i = 0; i < len; ++i) sentence.push_back("t" + std::to_string(rng.uniform_int(0, 30)));
    const int begin = static_cast<int>(rng.uniform_int(0, len - 1));
    const int end = begin + 1 + static_cast<int>(rng.uniform_int(0, len - begin - 1));
    doc.sentences[static_cast<std::size_t>(e.sentence_index)] = sentence;
    e.trigger_span = TokenSpan{begin, end};
    std::string surface;
    for (int i = begin; i < end; ++i) {
      if (i > begin) surface += " ";
      surface += sentence[static_cast<std::size_t>(i)];
    }
    e.surface = surface;
  }
  if (rng.bernoulli(0.3)) {
    doc.asr_segments.push_back(AsrSegment{0.5, 1.5, "spoken words"});
  }
  return doc;
}

inline Eigen::VectorXd random_vector(rng::Rng& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace evrel::test
