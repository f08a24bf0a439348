#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evrel/eventgraph.hpp"

namespace evrel {

using Embedding = Eigen::VectorXd;

struct EncoderConfig {
  int dim = 512;
  double fps = 3.0;               // frame sampling rate f_s
  double mask_exponent = 1.0;     // p in the event attention mask
  double similarity_scale = 100.0;
  double frame_jitter = 0.15;     // toy encoder: frame spread around its tag vector

  void check() const;  // throws ArgumentError on d < 2, fps <= 0, p <= 0
};

// Attention weights over a sentence of `length` tokens, centered on token
// `position`: w_i proportional to (1 + |i - position|)^(-exponent), normalized
// to sum 1. Positive, maximal at the event token, non-increasing with
// distance.
Eigen::VectorXd event_attention_weights(int length, int position, double exponent);

// Joint text/image encoder surface. Real pretrained encoders attach through
// this adapter (batch text -> vectors, batch image -> vectors); the repository
// ships the deterministic toy encoder below.
class JointEncoder {
 public:
  virtual ~JointEncoder() = default;
  virtual int dim() const = 0;
  // Event-focused when `focus` names a token index: token mixing follows the
  // polynomial attention mask centered there. Uniform mean otherwise.
  virtual Embedding encode_text(const std::vector<std::string>& tokens,
                                std::optional<int> focus) const = 0;
  virtual Embedding encode_frame(const std::string& descriptor) const = 0;

  // Batch helpers; outputs preserve input order.
  std::vector<Embedding> encode_text_batch(
      const std::vector<std::pair<std::vector<std::string>, std::optional<int>>>& inputs) const;
  std::vector<Embedding> encode_frame_batch(const std::vector<std::string>& descriptors) const;
};

// Seed-stable stand-in for a pretrained joint encoder. Every token maps to a
// deterministic unit vector; a frame descriptor "tag#salt" maps near the
// vector of "tag", so shared tags across modalities land on nearby vectors
// while unrelated ones stay near-orthogonal. Planted-correlation mode assigns
// designated concept tags exactly orthonormal vectors, which keeps distinct
// concepts separable even at small d.
class ToyEncoder : public JointEncoder {
 public:
  ToyEncoder(std::uint64_t seed, EncoderConfig config);

  int dim() const override { return config_.dim; }
  const EncoderConfig& config() const { return config_; }

  // Setup-time only; encoders are read-only once encoding starts. At most
  // `dim` tags can be planted.
  void plant_concepts(std::vector<std::string> tags);

  Embedding encode_text(const std::vector<std::string>& tokens,
                        std::optional<int> focus) const override;
  Embedding encode_frame(const std::string& descriptor) const override;

  Embedding token_vector(std::string_view token) const;

 private:
  Embedding unit_gaussian(std::uint64_t stream) const;

  std::uint64_t seed_;
  EncoderConfig config_;
  std::map<std::string, Embedding, std::less<>> planted_;
};

// ft_i: event-focused encoding of the sentence containing the event.
Embedding encode_text_event(const Document& doc, std::string_view event_id,
                            const JointEncoder& encoder);

// fv_j: arithmetic mean of the event's frame embeddings.
Embedding encode_video_event(const std::vector<Embedding>& frames);
Embedding encode_video_event(const Eigen::MatrixXd& frames);  // rows = frames

// similarity_scale * cosine(a, b); symmetric, in [-scale, +scale].
double similarity(const Embedding& a, const Embedding& b, double scale = 100.0);

// Midpoint sampling times start_s + (j + 0.5)/fps inside [start_s, end_s);
// a single midpoint frame when the event is shorter than one sampling step.
std::vector<double> frame_timestamps(double start_s, double end_s, double fps);

// Frame-embedding cache: per (doc, video event), a Z x d matrix of per-frame
// embeddings plus the sampling rate they were produced at.
class FrameStore {
 public:
  void put(std::string_view doc_id, std::string_view event_id, Eigen::MatrixXd frames,
           double fps);
  bool has(std::string_view doc_id, std::string_view event_id) const;
  const Eigen::MatrixXd& require(std::string_view doc_id, std::string_view event_id) const;

  std::size_t size() const { return order_.size(); }

  void save(const std::filesystem::path& path) const;
  static FrameStore load(const std::filesystem::path& path);

 private:
  struct Entry {
    Eigen::MatrixXd frames;
    double fps = 0.0;
  };
  std::map<std::pair<std::string, std::string>, Entry> entries_;
  std::vector<std::pair<std::string, std::string>> order_;  // insertion order
};

// Per-document embeddings, computed once per stage: ft for each text event
// and the mean frame embedding fv for each video event, in document order.
struct DocumentEmbeddings {
  std::vector<Embedding> text;
  std::vector<Embedding> video;

  static DocumentEmbeddings compute(const Document& doc, const JointEncoder& encoder,
                                    const FrameStore& frames);
};

}  // namespace evrel
