#pragma once

// Glue between text data and the model: vocabularies, id encoding, model
// construction from a run configuration, and evaluation.

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcdre/config.hpp"
#include "mcdre/data.hpp"
#include "mcdre/metrics.hpp"
#include "mcdre/model.hpp"
#include "mcdre/tags.hpp"

namespace mcdre {

inline constexpr std::string_view kUnknownToken = "<unk>";

struct Vocabularies {
  Vocabulary tokens;
  std::array<Vocabulary, 3> labels;  // entity, POS, MEDNER

  friend bool operator==(const Vocabularies&, const Vocabularies&) = default;
};

/// Every record must carry the gold column of each active aspect.
inline void require_columns(const Dataset& data, AspectSet aspects, const std::string& what) {
  for (const auto& r : data) {
    for (Aspect a : kAspects) {
      if (!aspects.contains(a) || r.has_column(a)) continue;
      throw ConfigError(what + ": sentence '" + r.id + "' has no " + std::string(aspect_name(a)) +
                        " column but the aspect is active");
    }
  }
}

inline std::string token_key(const RunConfig& c, const SentenceRecord& r, std::size_t i) {
  return c.embedding_key == EmbeddingKey::Occurrence ? occurrence_key(r, i) : r.tokens[i];
}

/// Token table: the external file's rows (plus a zero <unk> row when the file
/// has none), or <unk> followed by the training tokens in order of appearance.
inline Vocabularies build_vocabularies(const RunConfig& c, const Dataset& train, const EmbeddingFile* external) {
  Vocabularies v;
  if (external != nullptr) {
    for (const auto& t : external->tokens) v.tokens.add(t);
    v.tokens.add(std::string(kUnknownToken));
  } else {
    if (c.embedding_key == EmbeddingKey::Occurrence) {
      throw ConfigError("embedding_key = occurrence needs an external embedding file");
    }
    v.tokens.add(std::string(kUnknownToken));
    for (const auto& r : train)
      for (const auto& t : r.tokens) v.tokens.add(t);
  }
  const std::array<const std::vector<std::string>*, 3> fixed{&c.entity_labels, &c.pos_labels, &c.medner_labels};
  v.labels[0].add("O");
  for (Aspect a : kAspects) {
    auto& vocab = v.labels[index(a)];
    for (const auto& l : *fixed[index(a)]) vocab.add(l);
    if (!fixed[index(a)]->empty() || !c.active_aspects.contains(a)) continue;
    for (const auto& r : train)
      for (const auto& t : r.column(a)) vocab.add(t);
  }
  for (const auto& l : v.labels[0].items()) parse_tag(l, c.scheme);
  return v;
}

/// Embedding matrix for the external file with the trailing <unk> row.
inline Matrix<float> external_table(const EmbeddingFile& e, const Vocabularies& v) {
  Matrix<float> t(v.tokens.size(), e.vectors.cols());
  for (std::size_t i = 0; i < e.vectors.rows(); ++i)
    for (std::size_t j = 0; j < e.vectors.cols(); ++j) t(i, j) = e.vectors(i, j);
  return t;
}

inline ModelConfig model_config(const RunConfig& c, const Vocabularies& v, std::size_t embed_dim = 0) {
  ModelConfig m;
  m.shape = {c.d_model, c.n_heads, c.ffn_width()};
  m.n_layers = c.n_layers;
  m.dropout = c.dropout;
  m.mode = c.cross_mode;
  m.aspects = c.active_aspects;
  m.cross_last_only = c.cross_last_only;
  m.include_own = c.include_own;
  m.positions = c.positions;
  m.vocab_size = v.tokens.size();
  m.embed_dim = embed_dim == c.d_model ? 0 : embed_dim;
  m.frozen_embeddings = c.external_embedding();
  m.unk_id = v.tokens.find(std::string(kUnknownToken));
  for (Aspect a : kAspects)
    if (c.active_aspects.contains(a)) m.label_counts[index(a)] = v.labels[index(a)].size();
  m.seed = c.seed;
  return m;
}

struct EncodedSentence {
  std::vector<int> ids;
  std::array<std::vector<int>, 3> gold;

  GoldColumns gold_columns() const { return {gold[0], gold[1], gold[2]}; }
};

inline std::vector<int> token_ids(const RunConfig& c, const Vocabularies& v, const SentenceRecord& r) {
  const int unk = v.tokens.find(std::string(kUnknownToken)).value_or(-1);
  std::vector<int> ids;
  ids.reserve(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) ids.push_back(v.tokens.find(token_key(c, r, i)).value_or(unk));
  return ids;
}

/// Ids plus gold label ids of the active aspects.
inline EncodedSentence encode_sentence(const RunConfig& c, const Vocabularies& v, const SentenceRecord& r) {
  EncodedSentence e;
  e.ids = token_ids(c, v, r);
  for (Aspect a : kAspects) {
    if (!c.active_aspects.contains(a)) continue;
    const auto& col = r.column(a);
    auto& g = e.gold[index(a)];
    for (std::size_t i = 0; i < col.size(); ++i) {
      auto id = v.labels[index(a)].find(col[i]);
      if (!id) {
        throw DataError("sentence '" + r.id + "' token " + std::to_string(i) + ": label '" + col[i] +
                        "' is not in the " + std::string(aspect_name(a)) + " label set");
      }
      g.push_back(*id);
    }
  }
  return e;
}

inline std::vector<EncodedSentence> encode_dataset(const RunConfig& c, const Vocabularies& v, const Dataset& data) {
  require_columns(data, c.active_aspects, "training data");
  std::vector<EncodedSentence> out;
  out.reserve(data.size());
  for (const auto& r : data) out.push_back(encode_sentence(c, v, r));
  return out;
}

/// A model together with the tables needed to read and write text.
struct Tagger {
  RunConfig config;
  Vocabularies vocab;
  std::unique_ptr<MultiAspectModel<float>> model;

  /// Builds a fresh model. `external` supplies frozen embeddings.
  static Tagger create(const RunConfig& c, Vocabularies v, const EmbeddingFile* external) {
    Tagger t{c, std::move(v), nullptr};
    const std::size_t embed_dim = external != nullptr ? external->vectors.cols() : c.d_model;
    t.model = std::make_unique<MultiAspectModel<float>>(model_config(c, t.vocab, embed_dim));
    if (external != nullptr) t.model->params().at("embedding.table").value = external_table(*external, t.vocab);
    return t;
  }

  std::vector<std::string> predict_tags(const SentenceRecord& r) const {
    const auto labels = model->predict(token_ids(config, vocab, r));
    std::vector<std::string> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(vocab.labels[0].at(l));
    return out;
  }

  /// Argmax labels of an auxiliary head, or "_" when the aspect is inactive.
  std::array<std::vector<std::string>, 3> predict_all(const SentenceRecord& r) const {
    const auto dist = model->distributions(token_ids(config, vocab, r));
    std::array<std::vector<std::string>, 3> out;
    for (Aspect a : kAspects) {
      auto& col = out[index(a)];
      if (!config.active_aspects.contains(a)) {
        col.assign(r.size(), std::string(kMissing));
        continue;
      }
      const auto& p = dist[index(a)];
      for (std::size_t i = 0; i < p.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < p.cols(); ++j)
          if (p(i, j) > p(i, best)) best = j;
        col.push_back(vocab.labels[index(a)].at(static_cast<int>(best)));
      }
    }
    return out;
  }

  MentionCorpus predict_mentions(const Dataset& data) const {
    MentionCorpus out;
    out.reserve(data.size());
    for (const auto& r : data) out.push_back(decode(predict_tags(r), config.scheme));
    return out;
  }

  ScoreReport evaluate(const Dataset& data, MatchMode mode) const {
    return breakdown_report(gold_mentions(data, config.scheme), predict_mentions(data), mode);
  }
};

}  // namespace mcdre
