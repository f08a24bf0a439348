#include "evrel/synthetic.hpp"

#include <algorithm>
#include <set>

#include "evrel/errors.hpp"
#include "evrel/rng.hpp"
#include "evrel/util.hpp"

namespace evrel {

void SyntheticSpec::check() const {
  if (n_docs < 1) throw ConfigError("n_docs must be >= 1");
  if (text_events_min < 1 || text_events_max < text_events_min) {
    throw ConfigError("bad text event range");
  }
  if (video_events_min < 1 || video_events_max < video_events_min) {
    throw ConfigError("bad video event range");
  }
  for (double d : {hierarchy_density, identical_density, textless_subevent_rate, noise}) {
    if (d < 0.0 || d > 1.0) throw ConfigError("densities must be in [0, 1]");
  }
}

const std::map<std::string, std::vector<std::string>>& builtin_ontology() {
  static const std::map<std::string, std::vector<std::string>> kOntology = {
      {"protest", {"march", "arrest", "clash"}},
      {"storm", {"flood", "rescue", "evacuation"}},
      {"election", {"vote", "speech", "rally"}},
      {"wildfire", {"smoke", "firefighting", "airlift"}},
      {"ceremony", {"parade", "anthem", "fireworks"}},
  };
  return kOntology;
}

const std::vector<std::string>& builtin_standalone_concepts() {
  static const std::vector<std::string> kStandalone = {
      "traffic", "concert", "harvest", "landing", "auction", "regatta",
  };
  return kStandalone;
}

namespace {

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> kFillers = {
      "the",  "a",        "officials", "reported", "near",   "city",  "on",
      "said", "crowd",    "street",    "local",    "people", "after", "during",
      "new",  "witness",  "area",      "monday",   "large",  "major",
  };
  return kFillers;
}

}  // namespace

std::vector<std::string> planted_concept_tags() {
  std::vector<std::string> concepts;
  for (const auto& [parent, subs] : builtin_ontology()) {
    concepts.push_back(parent);
    for (const auto& s : subs) concepts.push_back(s);
  }
  for (const auto& s : builtin_standalone_concepts()) concepts.push_back(s);
  std::sort(concepts.begin(), concepts.end());
  concepts.erase(std::unique(concepts.begin(), concepts.end()), concepts.end());
  return concepts;
}

namespace {

const std::vector<std::string>& all_concepts() {
  static const std::vector<std::string> kConcepts = planted_concept_tags();
  return kConcepts;
}

const std::set<std::string>& subs_of(const std::string& concept_word) {
  static std::map<std::string, std::set<std::string>> cache;
  static bool built = false;
  if (!built) {
    for (const auto& [parent, subs] : builtin_ontology()) {
      cache[parent] = std::set<std::string>(subs.begin(), subs.end());
    }
    built = true;
  }
  static const std::set<std::string> kEmpty;
  const auto it = cache.find(concept_word);
  return it == cache.end() ? kEmpty : it->second;
}

Label planted_label(const std::string& text_concept, const std::string& video_concept) {
  if (text_concept == video_concept) return Label::Identical;
  if (subs_of(text_concept).count(video_concept)) return Label::Hierarchical;
  return Label::NoRel;
}

// Build one sentence around the trigger word; rewriting with a shorter length
// strengthens the trigger's share of the event-focused encoding.
std::vector<std::string> make_sentence(const std::string& trigger, int length,
                                       int trigger_pos, rng::Rng& rng) {
  std::vector<std::string> tokens;
  for (int i = 0; i < length; ++i) {
    tokens.push_back(i == trigger_pos ? trigger : rng.pick(filler_words()));
  }
  return tokens;
}

Eigen::MatrixXd make_frames(const ToyEncoder& encoder, const std::string& concept_word,
                            const std::string& doc_id, const std::string& event_id,
                            std::size_t num_frames, int attempt) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(num_frames), encoder.dim());
  for (std::size_t f = 0; f < num_frames; ++f) {
    const std::string descriptor = concept_word + "#" + doc_id + "/" + event_id + "/" +
                                   std::to_string(f) + "/r" + std::to_string(attempt);
    rows.row(static_cast<Eigen::Index>(f)) = encoder.encode_frame(descriptor).transpose();
  }
  return rows;
}

}  // namespace

SyntheticOutput generate_synthetic(const SyntheticSpec& spec, const ToyEncoder& encoder,
                                   double lambda) {
  spec.check();
  const auto& ontology = builtin_ontology();
  std::vector<std::string> parents;
  for (const auto& [parent, subs] : ontology) parents.push_back(parent);
  const std::vector<std::string>& concepts = all_concepts();
  const double scale = encoder.config().similarity_scale;
  const double fps = encoder.config().fps;
  // Calibration margins keep planted pairs clear of the threshold so that the
  // strict > / < contracts hold with room to spare.
  const double upper = lambda + 0.05 * scale;
  const double lower = lambda - 0.02 * scale;

  SyntheticOutput out;
  for (int doc_i = 0; doc_i < spec.n_docs; ++doc_i) {
    rng::Rng rng(rng::substream(spec.seed, "gen.doc", static_cast<std::uint64_t>(doc_i)));
    Document doc;
    doc.doc_id = "doc" + std::to_string(doc_i);

    const int m = static_cast<int>(rng.uniform_int(spec.text_events_min, spec.text_events_max));
    const int n =
        static_cast<int>(rng.uniform_int(spec.video_events_min, spec.video_events_max));

    // Text side: concept slots, with hierarchy pairs occupying two slots.
    std::vector<std::string> text_concepts;
    std::vector<std::pair<int, int>> hier_slots;  // (parent index, sub index)
    while (static_cast<int>(text_concepts.size()) < m) {
      const bool room = static_cast<int>(text_concepts.size()) + 1 < m;
      if (room && rng.bernoulli(spec.hierarchy_density)) {
        const auto& parent = rng.pick(parents);
        const auto& sub = rng.pick(ontology.at(parent));
        hier_slots.emplace_back(static_cast<int>(text_concepts.size()),
                                static_cast<int>(text_concepts.size()) + 1);
        text_concepts.push_back(parent);
        text_concepts.push_back(sub);
      } else {
        text_concepts.push_back(rng.pick(concepts));
      }
    }

    for (int t = 0; t < m; ++t) {
      const int length = static_cast<int>(rng.uniform_int(3, 9));
      const int pos = static_cast<int>(rng.uniform_int(0, length - 1));
      doc.sentences.push_back(make_sentence(text_concepts[static_cast<std::size_t>(t)],
                                            length, pos, rng));
      TextEvent e;
      e.id = "e" + std::to_string(t);
      e.sentence_index = t;
      e.trigger_span = TokenSpan{pos, pos + 1};
      e.surface = text_concepts[static_cast<std::size_t>(t)];
      doc.text_events.push_back(std::move(e));
    }

    // Video side: concepts per shot. Background shots avoid anything that
    // would relate to a text event, so gold labels come only from the
    // planted channels.
    std::set<std::string> text_related;
    for (const auto& c : text_concepts) {
      text_related.insert(c);
      for (const auto& s : subs_of(c)) text_related.insert(s);
    }
    std::vector<std::string> background_pool;
    for (const auto& c : concepts) {
      if (!text_related.count(c)) background_pool.push_back(c);
    }
    std::vector<std::string> text_parents;
    for (const auto& c : text_concepts) {
      if (ontology.count(c)) text_parents.push_back(c);
    }

    std::vector<std::string> video_concepts;
    double t_cursor = 0.0;
    for (int v = 0; v < n; ++v) {
      const double roll = rng.uniform();
      std::string concept_word;
      if (roll < spec.identical_density) {
        concept_word = text_concepts[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(m) - 1))];
      } else if (roll < spec.identical_density + spec.textless_subevent_rate &&
                 !text_parents.empty()) {
        const auto& parent = rng.pick(text_parents);
        concept_word = rng.pick(ontology.at(parent));
      } else if (!background_pool.empty()) {
        concept_word = rng.pick(background_pool);
      } else {
        concept_word = rng.pick(concepts);
      }
      video_concepts.push_back(concept_word);

      VideoEvent ve;
      ve.id = "v" + std::to_string(v);
      ve.start_s = t_cursor;
      ve.end_s = t_cursor + rng.uniform(2.0, 6.0);
      ve.frame_ref = doc.doc_id + "/" + ve.id;
      t_cursor = ve.end_s;
      doc.video_events.push_back(std::move(ve));
    }
    doc.video_duration_s = t_cursor + rng.uniform(0.0, 5.0);
    doc.description_word_count = 10 + static_cast<int>(rng.uniform_int(0, 40));

    // Calibrate each video event's frames against every text event,
    // re-rolling the frame jitter until planted pairs clear the threshold and
    // unrelated pairs stay under it. Frame jitter shrinks with the frame
    // count, so a constraint that stays stuck is a sentence problem: the
    // filler content of one text event aligned with the wrong concept (or
    // diluted the right one). That sentence is rebuilt with fresh fillers,
    // then shortened to the bare trigger, and the document recalibrates
    // against the re-encoded text.
    std::vector<Embedding> text_embs;
    for (const auto& e : doc.text_events) {
      text_embs.push_back(encode_text_event(doc, e.id, encoder));
    }
    std::vector<int> rebuilds(static_cast<std::size_t>(m), 0);

    for (int text_pass = 0;; ++text_pass) {
      if (text_pass > 8 * m) {
        throw PipelineError(doc.doc_id, "could not calibrate planted similarities");
      }
      int stuck_text = -1;
      for (int v = 0; v < n && stuck_text < 0; ++v) {
        const auto& ve = doc.video_events[static_cast<std::size_t>(v)];
        const auto num_frames = frame_timestamps(ve.start_s, ve.end_s, fps).size();
        bool calibrated = false;
        int last_violator = -1;
        for (int attempt = 0; attempt < 200 && !calibrated; ++attempt) {
          Eigen::MatrixXd frames =
              make_frames(encoder, video_concepts[static_cast<std::size_t>(v)], doc.doc_id,
                          ve.id, num_frames, attempt + 1000 * text_pass);
          const Embedding fv = encode_video_event(frames);
          calibrated = true;
          for (int t = 0; t < m && calibrated; ++t) {
            const double sim =
                similarity(text_embs[static_cast<std::size_t>(t)], fv, scale);
            const Label want = planted_label(text_concepts[static_cast<std::size_t>(t)],
                                             video_concepts[static_cast<std::size_t>(v)]);
            const bool bad = (want == Label::Identical && sim <= upper) ||
                             (want != Label::Identical && sim >= lower);
            if (bad) {
              calibrated = false;
              last_violator = t;
            }
          }
          if (calibrated) out.frames.put(doc.doc_id, ve.id, frames, fps);
        }
        if (!calibrated) stuck_text = last_violator;
      }
      if (stuck_text < 0) break;

      auto& event = doc.text_events[static_cast<std::size_t>(stuck_text)];
      auto& sentence = doc.sentences[static_cast<std::size_t>(stuck_text)];
      const int tries = ++rebuilds[static_cast<std::size_t>(stuck_text)];
      if (tries <= 3) {
        rng::Rng srng(rng::substream(
            spec.seed, "gen.sentence",
            static_cast<std::uint64_t>(doc_i) * 1000 +
                static_cast<std::uint64_t>(stuck_text) * 10 +
                static_cast<std::uint64_t>(tries)));
        const int length = static_cast<int>(srng.uniform_int(3, 9));
        const int pos = static_cast<int>(srng.uniform_int(0, length - 1));
        sentence = make_sentence(text_concepts[static_cast<std::size_t>(stuck_text)],
                                 length, pos, srng);
        event.trigger_span = TokenSpan{pos, pos + 1};
      } else {
        sentence = {text_concepts[static_cast<std::size_t>(stuck_text)]};
        event.trigger_span = TokenSpan{0, 1};
      }
      text_embs[static_cast<std::size_t>(stuck_text)] =
          encode_text_event(doc, event.id, encoder);
    }

    // Gold labels are semantic: concept equality or ontology containment.
    for (int t = 0; t < m; ++t) {
      for (int v = 0; v < n; ++v) {
        const Label label = planted_label(text_concepts[static_cast<std::size_t>(t)],
                                          video_concepts[static_cast<std::size_t>(v)]);
        if (label == Label::NoRel) continue;
        out.gold.push_back(RelationRecord{doc.doc_id,
                                          doc.text_events[static_cast<std::size_t>(t)].id,
                                          doc.video_events[static_cast<std::size_t>(v)].id,
                                          label, 1.0, "gold"});
      }
    }

    // Noise: corrupt a video event's frames toward a concept unrelated to the
    // document's text (gold keeps the original meaning), and drop hierarchy
    // records. Corrupted events lose their planted similarity, so their gold
    // relations become unrecoverable from the embeddings.
    rng::Rng noise_rng(
        rng::substream(spec.seed, "gen.noise", static_cast<std::uint64_t>(doc_i)));
    for (int v = 0; v < n; ++v) {
      if (!noise_rng.bernoulli(spec.noise)) continue;
      const auto& ve = doc.video_events[static_cast<std::size_t>(v)];
      const auto num_frames = frame_timestamps(ve.start_s, ve.end_s, fps).size();
      const auto& pool = background_pool.empty() ? concepts : background_pool;
      const auto& wrong = noise_rng.pick(pool);
      out.frames.put(doc.doc_id, ve.id,
                     make_frames(encoder, wrong, doc.doc_id, ve.id, num_frames, -1), fps);
    }
    for (const auto& [pi, si] : hier_slots) {
      if (noise_rng.bernoulli(spec.noise)) continue;  // dropped record
      out.text_hier.push_back(
          TextHierPair{doc.doc_id, doc.text_events[static_cast<std::size_t>(pi)].id,
                       doc.text_events[static_cast<std::size_t>(si)].id});
    }

    const auto violations = validate_document(doc);
    if (!violations.empty()) {
      throw PipelineError(doc.doc_id, "generator produced an invalid document: " +
                                          violations.front().rule);
    }
    out.docs.push_back(std::move(doc));
  }
  return out;
}

}  // namespace evrel
