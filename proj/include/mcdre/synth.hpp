#pragma once

// Seeded synthetic medication corpus.
//
// Whether a slot word is an entity depends on its word class (symptom or
// not), and the class is visible in the MEDNER column. A third of the symptom
// and non-symptom words are "held back": in training they occur only in
// neutral contexts ("history of X"), where the entity column is O for both
// classes and only MEDNER tells them apart. Dev sentences put held-back words
// into entity slots.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mcdre/data.hpp"
#include "mcdre/rng.hpp"

namespace mcdre {

struct SynthOptions {
  std::uint64_t seed = 1;
  std::size_t train_sentences = 400;
  std::size_t dev_sentences = 200;
};

struct SynthCorpus {
  Dataset train;
  Dataset dev;
};

namespace synth {

inline constexpr std::array<std::string_view, 30> kDrugs{
    "ibuprofen", "aspirin",    "warfarin",   "metformin",   "lisinopril", "atorvastatin", "amoxicillin", "naproxen",
    "prednisone", "gabapentin", "sertraline", "omeprazole", "losartan",   "tramadol",     "clopidogrel", "diclofenac",
    "citalopram", "furosemide", "digoxin",    "heparin",    "morphine",   "codeine",      "lithium",     "insulin",
    "simvastatin", "celecoxib", "doxycycline", "fluoxetine", "baclofen",  "colace"};

inline constexpr std::array<std::string_view, 36> kSymptoms{
    "rash",      "nausea",    "headache",  "dizziness",  "fatigue",    "insomnia",   "vomiting",  "diarrhea",
    "itching",   "bleeding",  "cough",     "fever",      "constipation", "anxiety",  "tremor",    "confusion",
    "hives",     "cramps",    "palpitations", "drowsiness", "edema",   "bruising",   "hypotension", "tinnitus",
    "myalgia",   "weakness",  "sweating",  "dyspepsia",  "heartburn",  "numbness",   "blurring",  "syncope",
    "jaundice",  "wheezing",  "agitation", "chills"};

inline constexpr std::array<std::string_view, 18> kOthers{
    "relief",  "improvement", "appetite", "energy",  "focus",   "calm",     "sleep",  "mobility", "comfort",
    "control", "recovery",    "strength", "stamina", "clarity", "progress", "benefit", "balance", "routine"};

inline constexpr std::array<std::string_view, 8> kParts{"shoulder", "knee", "back", "neck", "hip", "elbow", "ankle", "wrist"};
inline constexpr std::array<std::string_view, 4> kSides{"left", "right", "upper", "lower"};
inline constexpr std::array<std::string_view, 4> kAches{"pain", "swelling", "stiffness", "soreness"};
inline constexpr std::array<std::string_view, 3> kSore{"sore", "stiff", "swollen"};
inline constexpr std::array<std::string_view, 4> kNumbers{"1", "2", "5", "10"};
inline constexpr std::array<std::string_view, 4> kForms{"tablet", "capsule", "mg", "puff"};
inline constexpr std::array<std::string_view, 4> kFrequencies{"daily", "twice", "nightly", "weekly"};

struct Word {
  std::string_view text, pos, medner;
};

class Builder {
 public:
  explicit Builder(std::string id) { r_.id = std::move(id); }

  /// Appends words; returns the index of the first one.
  std::size_t add(const Word& w, std::string_view tag = "O") {
    r_.tokens.emplace_back(w.text);
    r_.pos.emplace_back(w.pos);
    r_.medner.emplace_back(w.medner);
    r_.entity.emplace_back(tag);
    return r_.tokens.size() - 1;
  }
  void plain(std::string_view text, std::string_view pos) { add({text, pos, "O"}); }

  SentenceRecord take() { return std::move(r_); }

 private:
  SentenceRecord r_;
};

/// Slot filler: a symptom or non-symptom noun.
struct Filler {
  std::string_view word;
  bool symptom = false;
};

class Generator {
 public:
  explicit Generator(std::uint64_t seed) {
    Rng lex = Rng::derive(seed, "synth.lexicon");
    split(lex, kSymptoms, true, seen_symptoms_, held_symptoms_);
    split(lex, kOthers, false, seen_others_, held_others_);
  }

  SentenceRecord sentence(Rng& rng, std::string id, bool dev) {
    Builder b(std::move(id));
    // dev sentences are mostly slot templates
    const auto& mix = dev ? kDevMix : kTrainMix;
    const double u = rng.uniform01();
    if (u < mix[0]) prescription(rng, b, slot(rng, dev));
    else if (u < mix[1]) reaction(rng, b, slot(rng, dev));
    else if (u < mix[2]) neutral(rng, b, neutral_filler(rng));
    else if (u < mix[3]) shared_ache(rng, b);
    else sore_part(rng, b);
    return b.take();
  }

 private:
  // cumulative template probabilities
  static constexpr std::array<double, 4> kTrainMix{0.28, 0.54, 0.76, 0.88};
  static constexpr std::array<double, 4> kDevMix{0.35, 0.80, 0.86, 0.93};

  // a shuffled third of each class is held back
  template <std::size_t N>
  static void split(Rng& lex, const std::array<std::string_view, N>& words, bool symptom, std::vector<Filler>& seen,
                    std::vector<Filler>& held) {
    std::vector<std::string_view> w(words.begin(), words.end());
    lex.shuffle(w);
    for (std::size_t i = 0; i < w.size(); ++i) (i < w.size() / 3 ? held : seen).push_back({w[i], symptom});
  }

  template <class V>
  static const auto& pick(Rng& rng, const V& v) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
  }

  /// Entity-slot filler. Training draws only from the seen words; dev
  /// draws held-back words 75% of the time.
  Filler slot(Rng& rng, bool dev) {
    const bool held = dev && rng.bernoulli(0.75);
    const bool symptom = rng.bernoulli(0.6);
    if (held) return pick(rng, symptom ? held_symptoms_ : held_others_);
    return pick(rng, symptom ? seen_symptoms_ : seen_others_);
  }

  /// Neutral-context filler, biased towards held-back words.
  Filler neutral_filler(Rng& rng) {
    const bool held = rng.bernoulli(0.7);
    const bool symptom = rng.bernoulli(0.6);
    if (held) return pick(rng, symptom ? held_symptoms_ : held_others_);
    return pick(rng, symptom ? seen_symptoms_ : seen_others_);
  }

  static Word filler_word(const Filler& f) { return {f.word, "NN", f.symptom ? "DISEASE" : "O"}; }
  static Word drug(Rng& rng) { return {pick(rng, kDrugs), "NNP", "CHEMICAL"}; }

  // <drug> <n> <form> <freq> for <X>
  static void prescription(Rng& rng, Builder& b, const Filler& x) {
    b.add(drug(rng), "B-Drug");
    b.add({pick(rng, kNumbers), "CD", "O"}, "B-Dosage");
    b.add({pick(rng, kForms), "NN", "O"}, "I-Dosage");
    b.add({pick(rng, kFrequencies), "RB", "O"}, "B-Frequency");
    b.plain("for", "IN");
    b.add(filler_word(x), x.symptom ? "B-Reason" : "O");
  }

  // [patient] reported <X> after [starting] <drug>
  static void reaction(Rng& rng, Builder& b, const Filler& x) {
    if (rng.bernoulli(0.5)) b.plain("patient", "NN");
    b.plain("reported", "VBD");
    b.add(filler_word(x), x.symptom ? "B-ADE" : "O");
    b.plain("after", "IN");
    if (rng.bernoulli(0.5)) b.plain("starting", "VBG");
    b.add(drug(rng), "B-Drug");
  }

  // history of <X> | denies <X> | no <X> today
  static void neutral(Rng& rng, Builder& b, const Filler& x) {
    switch (rng.below(3)) {
      case 0:
        b.plain("history", "NN");
        b.plain("of", "IN");
        b.add(filler_word(x));
        break;
      case 1:
        b.plain("denies", "VBZ");
        b.add(filler_word(x));
        break;
      default:
        b.plain("no", "DT");
        b.add(filler_word(x));
        b.plain("today", "NN");
        break;
    }
  }

  // developed [side] <part> and <part> <ache> after <drug>
  // Both parts share the ache token: [side part]+[ache] and [part]+[ache].
  static void shared_ache(Rng& rng, Builder& b) {
    b.plain("developed", "VBD");
    const auto p1 = pick(rng, kParts);
    auto p2 = pick(rng, kParts);
    while (p2 == p1) p2 = pick(rng, kParts);
    if (rng.bernoulli(0.5)) {
      b.add({pick(rng, kSides), "JJ", "O"}, "DB-ADE");
      b.add({p1, "NN", "ANATOMY"}, "DI-ADE");
    } else {
      b.add({p1, "NN", "ANATOMY"}, "DB-ADE");
    }
    b.plain("and", "CC");
    b.add({p2, "NN", "ANATOMY"}, "DB-ADE");
    b.add({pick(rng, kAches), "NN", "DISEASE"}, "HB-ADE");
    b.plain("after", "IN");
    b.add(drug(rng), "B-Drug");
  }

  // <part> felt very <sore> on <drug>: one discontinuous mention
  static void sore_part(Rng& rng, Builder& b) {
    b.add({pick(rng, kParts), "NN", "ANATOMY"}, "DB-ADE");
    b.plain("felt", "VBD");
    b.plain("very", "RB");
    b.add({pick(rng, kSore), "JJ", "DISEASE"}, "DB-ADE");
    b.plain("on", "IN");
    b.add(drug(rng), "B-Drug");
  }

  std::vector<Filler> seen_symptoms_, held_symptoms_, seen_others_, held_others_;
};

}  // namespace synth

/// Deterministic for a given seed. Sentence ids are "train:<i>" and "dev:<i>".
inline SynthCorpus generate_synthetic(const SynthOptions& o) {
  synth::Generator g(o.seed);
  SynthCorpus c;
  Rng train_rng = Rng::derive(o.seed, "synth.train");
  Rng dev_rng = Rng::derive(o.seed, "synth.dev");
  for (std::size_t i = 0; i < o.train_sentences; ++i) c.train.push_back(g.sentence(train_rng, "train:" + std::to_string(i), false));
  for (std::size_t i = 0; i < o.dev_sentences; ++i) c.dev.push_back(g.sentence(dev_rng, "dev:" + std::to_string(i), true));
  return c;
}

}  // namespace mcdre
