#include "evrel/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "evrel/errors.hpp"
#include "evrel/rng.hpp"
#include "evrel/tensorfile.hpp"

namespace evrel {

void EncoderConfig::check() const {
  if (dim < 2) throw ArgumentError("encoder dim must be >= 2");
  if (!(fps > 0.0)) throw ArgumentError("fps must be > 0");
  if (!(mask_exponent > 0.0)) throw ArgumentError("mask_exponent must be > 0");
  if (!(similarity_scale > 0.0)) throw ArgumentError("similarity_scale must be > 0");
}

Eigen::VectorXd event_attention_weights(int length, int position, double exponent) {
  if (length < 1) throw ArgumentError("sentence length must be >= 1");
  if (position < 0 || position >= length) {
    throw ArgumentError("event position " + std::to_string(position) +
                        " outside sentence of length " + std::to_string(length));
  }
  if (!(exponent > 0.0)) throw ArgumentError("mask exponent must be > 0");
  Eigen::VectorXd w(length);
  for (int i = 0; i < length; ++i) {
    w[i] = std::pow(1.0 + std::abs(i - position), -exponent);
  }
  w /= w.sum();
  return w;
}

std::vector<Embedding> JointEncoder::encode_text_batch(
    const std::vector<std::pair<std::vector<std::string>, std::optional<int>>>& inputs) const {
  std::vector<Embedding> out;
  out.reserve(inputs.size());
  for (const auto& [tokens, focus] : inputs) out.push_back(encode_text(tokens, focus));
  return out;
}

std::vector<Embedding> JointEncoder::encode_frame_batch(
    const std::vector<std::string>& descriptors) const {
  std::vector<Embedding> out;
  out.reserve(descriptors.size());
  for (const auto& d : descriptors) out.push_back(encode_frame(d));
  return out;
}

ToyEncoder::ToyEncoder(std::uint64_t seed, EncoderConfig config)
    : seed_(seed), config_(config) {
  config_.check();
}

Embedding ToyEncoder::unit_gaussian(std::uint64_t stream) const {
  rng::Rng r(stream);
  Embedding v(config_.dim);
  for (int i = 0; i < config_.dim; ++i) v[i] = r.normal();
  const double n = v.norm();
  if (n < 1e-12) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / n;
}

void ToyEncoder::plant_concepts(std::vector<std::string> tags) {
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  if (static_cast<int>(tags.size()) > config_.dim) {
    throw ArgumentError("cannot plant " + std::to_string(tags.size()) +
                        " concepts into dimension " + std::to_string(config_.dim));
  }
  // Seeded random orthonormal basis; tag i takes column i in sorted order.
  rng::Rng r(rng::substream(seed_, "planted-basis"));
  Eigen::MatrixXd g(config_.dim, config_.dim);
  for (int i = 0; i < config_.dim; ++i) {
    for (int j = 0; j < config_.dim; ++j) g(i, j) = r.normal();
  }
  const Eigen::MatrixXd q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  planted_.clear();
  for (std::size_t i = 0; i < tags.size(); ++i) {
    planted_[tags[i]] = q.col(static_cast<Eigen::Index>(i));
  }
}

Embedding ToyEncoder::token_vector(std::string_view token) const {
  const auto it = planted_.find(token);
  if (it != planted_.end()) return it->second;
  return unit_gaussian(rng::substream(seed_, "tok:" + std::string(token)));
}

Embedding ToyEncoder::encode_text(const std::vector<std::string>& tokens,
                                  std::optional<int> focus) const {
  if (tokens.empty()) throw ArgumentError("cannot encode an empty token sequence");
  const int length = static_cast<int>(tokens.size());
  Eigen::VectorXd weights;
  if (focus) {
    weights = event_attention_weights(length, *focus, config_.mask_exponent);
  } else {
    weights = Eigen::VectorXd::Constant(length, 1.0 / length);
  }
  Embedding out = Embedding::Zero(config_.dim);
  for (int i = 0; i < length; ++i) {
    out += weights[i] * token_vector(tokens[static_cast<std::size_t>(i)]);
  }
  return out;
}

Embedding ToyEncoder::encode_frame(const std::string& descriptor) const {
  const auto hash_pos = descriptor.find('#');
  const std::string tag =
      hash_pos == std::string::npos ? descriptor : descriptor.substr(0, hash_pos);
  Embedding v = token_vector(tag);
  if (config_.frame_jitter > 0.0) {
    v += config_.frame_jitter * unit_gaussian(rng::substream(seed_, "frame:" + descriptor));
    const double n = v.norm();
    if (n > 1e-12) v /= n;
  }
  return v;
}

Embedding encode_text_event(const Document& doc, std::string_view event_id,
                            const JointEncoder& encoder) {
  const TextEvent* event = doc.find_text_event(event_id);
  if (!event) {
    throw ArgumentError("unknown text event '" + std::string(event_id) + "' in doc " +
                        doc.doc_id);
  }
  const auto& sentence = doc.sentences.at(static_cast<std::size_t>(event->sentence_index));
  return encoder.encode_text(sentence, event->trigger_span.begin);
}

Embedding encode_video_event(const std::vector<Embedding>& frames) {
  if (frames.empty()) throw ArgumentError("video event has no frames");
  Embedding sum = frames.front();
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].size() != sum.size()) {
      throw ArgumentError("frame embedding dimension mismatch");
    }
    sum += frames[i];
  }
  return sum / static_cast<double>(frames.size());
}

Embedding encode_video_event(const Eigen::MatrixXd& frames) {
  if (frames.rows() == 0) throw ArgumentError("video event has no frames");
  return frames.colwise().mean();
}

double similarity(const Embedding& a, const Embedding& b, double scale) {
  if (a.size() != b.size()) throw ArgumentError("embedding dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-15 || nb < 1e-15) throw ArgumentError("similarity of a zero vector");
  return scale * a.dot(b) / (na * nb);
}

std::vector<double> frame_timestamps(double start_s, double end_s, double fps) {
  if (!(fps > 0.0)) throw ArgumentError("fps must be > 0");
  if (!(start_s < end_s)) throw ArgumentError("empty video event interval");
  std::vector<double> ts;
  for (int j = 0;; ++j) {
    const double t = start_s + (j + 0.5) / fps;
    if (t >= end_s) break;
    ts.push_back(t);
  }
  if (ts.empty()) ts.push_back(0.5 * (start_s + end_s));
  return ts;
}

void FrameStore::put(std::string_view doc_id, std::string_view event_id,
                     Eigen::MatrixXd frames, double fps) {
  auto key = std::make_pair(std::string(doc_id), std::string(event_id));
  if (entries_.find(key) == entries_.end()) order_.push_back(key);
  entries_[key] = Entry{std::move(frames), fps};
}

bool FrameStore::has(std::string_view doc_id, std::string_view event_id) const {
  return entries_.count({std::string(doc_id), std::string(event_id)}) > 0;
}

const Eigen::MatrixXd& FrameStore::require(std::string_view doc_id,
                                           std::string_view event_id) const {
  const auto it = entries_.find({std::string(doc_id), std::string(event_id)});
  if (it == entries_.end()) {
    throw MissingInputError("no cached frames for doc '" + std::string(doc_id) +
                            "' event '" + std::string(event_id) + "'");
  }
  return it->second.frames;
}

void FrameStore::save(const std::filesystem::path& path) const {
  io::TensorFile file;
  file.meta = {{"format", "frame-cache"}, {"version", 1}};
  for (const auto& key : order_) {
    const Entry& entry = entries_.at(key);
    nlohmann::json meta{{"doc_id", key.first},
                        {"event_id", key.second},
                        {"Z", entry.frames.rows()},
                        {"d", entry.frames.cols()},
                        {"fps", entry.fps}};
    file.add(key.first + "/" + key.second, entry.frames, std::move(meta));
  }
  file.save(path);
}

FrameStore FrameStore::load(const std::filesystem::path& path) {
  const auto file = io::TensorFile::load(path);
  if (file.meta.value("format", "") != "frame-cache") {
    throw ParseError(path.string(), 2, "not a frame cache");
  }
  FrameStore store;
  for (const auto& t : file.tensors) {
    store.put(t.meta.at("doc_id").get<std::string>(),
              t.meta.at("event_id").get<std::string>(), t.data,
              t.meta.value("fps", 0.0));
  }
  return store;
}

DocumentEmbeddings DocumentEmbeddings::compute(const Document& doc,
                                               const JointEncoder& encoder,
                                               const FrameStore& frames) {
  DocumentEmbeddings out;
  out.text.reserve(doc.text_events.size());
  for (const auto& e : doc.text_events) {
    out.text.push_back(encode_text_event(doc, e.id, encoder));
  }
  out.video.reserve(doc.video_events.size());
  for (const auto& v : doc.video_events) {
    out.video.push_back(encode_video_event(frames.require(doc.doc_id, v.id)));
  }
  return out;
}

}  // namespace evrel
