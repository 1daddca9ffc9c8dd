#pragma once

// The multi-aspect model: one shared embedding, up to three encoder stacks
// (semantic = drug entities, syntactic = POS, domain = general medical NER)
// coupled layer by layer through a cross mode, and a softmax head per stack.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdre/autodiff.hpp"
#include "mcdre/cross.hpp"
#include "mcdre/encoder.hpp"
#include "mcdre/rng.hpp"
#include "mcdre/types.hpp"

namespace mcdre {

struct ModelConfig {
  EncoderShape shape{};
  std::size_t n_layers = 2;
  double dropout = 0.5;
  CrossMode mode = CrossMode::KeyValue;
  AspectSet aspects = AspectSet::all();
  bool cross_last_only = false;
  bool include_own = false;
  bool positions = true;

  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;  // 0 means d_model
  bool frozen_embeddings = false;
  std::optional<int> unk_id;

  std::array<std::size_t, 3> label_counts{};
  std::uint64_t seed = 1;

  std::size_t input_width() const { return embed_dim == 0 ? shape.d_model : embed_dim; }

  void validate() const {
    shape.validate();
    if (n_layers == 0) throw ConfigError("n_layers must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
    if (!aspects.contains(Aspect::Semantic)) throw ConfigError("the semantic aspect (se) must be active");
    if (vocab_size == 0) throw ConfigError("empty token vocabulary");
    for (Aspect a : kAspects) {
      if (aspects.contains(a) && label_counts[index(a)] == 0) {
        throw ConfigError("aspect " + std::string(aspect_name(a)) + " is active but has no labels");
      }
    }
  }

  /// Mode actually applied at `layer` (crosses need a companion encoder).
  CrossMode layer_mode(std::size_t layer) const {
    if (mode == CrossMode::NoExchange || aspects.size() < 2) return CrossMode::NoExchange;
    if (cross_last_only && layer + 1 != n_layers) return CrossMode::NoExchange;
    return mode;
  }
};

/// Dropout randomness, one stream per consumer so that encoders never share draws.
struct DropoutStreams {
  Rng embedding;
  std::array<Rng, 3> aspects;

  static DropoutStreams from_seed(std::uint64_t seed) {
    return {Rng::derive(seed, "dropout.embedding"),
            {Rng::derive(seed, "dropout.se"), Rng::derive(seed, "dropout.sy"), Rng::derive(seed, "dropout.do")}};
  }
};

template <class T>
struct TaskHead {
  ParamSlot<T>* w = nullptr;
  ParamSlot<T>* b = nullptr;
};

template <class T>
struct ForwardResult {
  std::array<std::optional<Var<T>>, 3> probs;      // P_se, P_sy, P_do
  std::array<std::optional<Var<T>>, 3> encodings;  // stack outputs J_*
  std::array<std::vector<LayerTapState<T>>, 3> taps;
  std::array<std::vector<std::vector<Var<T>>>, 3> attention;  // per layer, per head
};

template <class T>
class MultiAspectModel {
 public:
  explicit MultiAspectModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::size_t d = config_.shape.d_model;
    const std::size_t in = config_.input_width();
    {
      Rng rng = Rng::derive(config_.seed, "embedding.table");
      const double limit = std::sqrt(3.0);
      Matrix<T> table(config_.vocab_size, in);
      for (auto& v : table.values()) v = static_cast<T>(rng.uniform(-limit, limit));
      embedding_.table = &params_.add("embedding.table", std::move(table), !config_.frozen_embeddings);
      embedding_.frozen = config_.frozen_embeddings;
      embedding_.unk_id = config_.unk_id;
    }
    if (in != d) {
      embedding_.proj_w = &params_.add("embedding.proj.W", glorot_uniform<T>(in, d, config_.seed, "embedding.proj.W"));
      embedding_.proj_b = &params_.add("embedding.proj.b", Matrix<T>(1, d));
    }
    const std::size_t n_foreign = config_.aspects.size() - 1;
    for (Aspect a : kAspects) {
      if (!config_.aspects.contains(a)) continue;
      const std::string an(aspect_name(a));
      for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const CrossMode m = config_.layer_mode(l);
        std::size_t kv = d;
        std::size_t cross = 0;
        if (m == CrossMode::KeyValue) kv = (n_foreign + (config_.include_own ? 1 : 0)) * d;
        if (m == CrossMode::Attention || m == CrossMode::FeedForward) cross = n_foreign * d;
        layers_[index(a)].push_back(make_encoder_layer<T>(params_, an + ".layer" + std::to_string(l), config_.shape,
                                                          kv, cross, config_.seed));
      }
      const std::size_t c = config_.label_counts[index(a)];
      heads_[index(a)].w = &params_.add(an + ".head.W", glorot_uniform<T>(d, c, config_.seed, an + ".head.W"));
      heads_[index(a)].b = &params_.add(an + ".head.b", Matrix<T>(1, c));
    }
  }

  MultiAspectModel(const MultiAspectModel&) = delete;
  MultiAspectModel& operator=(const MultiAspectModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  const EmbeddingTable<T>& embedding() const noexcept { return embedding_; }
  const std::vector<EncoderLayerParams<T>>& layers(Aspect a) const { return layers_[index(a)]; }
  const TaskHead<T>& head(Aspect a) const { return heads_[index(a)]; }

  /// Forward pass of one sequence. Rows at index >= valid_len are padding:
  /// they are masked as attention keys and should be masked from the loss.
  ForwardResult<T> forward(Tape<T>& tape, std::span<const int> token_ids, bool training,
                           DropoutStreams* streams = nullptr,
                           std::size_t valid_len = std::numeric_limits<std::size_t>::max()) const {
    if (training && config_.dropout > 0.0 && streams == nullptr) {
      throw ConfigError("training forward pass needs dropout streams");
    }
    ForwardResult<T> out;
    Var<T> x = embed(tape, token_ids, embedding_, config_.positions, config_.dropout, training,
                     streams != nullptr ? &streams->embedding : nullptr);
    if (token_ids.empty()) {
      for (Aspect a : kAspects) {
        if (!config_.aspects.contains(a)) continue;
        out.probs[index(a)] = tape.constant(Matrix<T>(0, config_.label_counts[index(a)]));
      }
      return out;
    }

    std::vector<Aspect> active;
    for (Aspect a : kAspects)
      if (config_.aspects.contains(a)) active.push_back(a);
    std::vector<Var<T>> states(active.size(), x);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      std::vector<WireInput<T>> step(active.size());
      for (std::size_t i = 0; i < active.size(); ++i) {
        const Aspect a = active[i];
        step[i].x = states[i];
        step[i].params = &layers_[index(a)][l];
        step[i].layer = l;
        step[i].ctx.dropout = config_.dropout;
        step[i].ctx.training = training;
        step[i].ctx.rng = streams != nullptr ? &streams->aspects[index(a)] : nullptr;
        step[i].ctx.valid_len = valid_len;
        step[i].ctx.include_own = config_.include_own;
      }
      auto outs = wire_step<T>(step, config_.layer_mode(l));
      for (std::size_t i = 0; i < active.size(); ++i) {
        states[i] = outs[i].y;
        out.taps[index(active[i])].push_back(outs[i].tap);
        out.attention[index(active[i])].push_back(std::move(outs[i].attention_weights));
      }
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Aspect a = active[i];
      out.encodings[index(a)] = states[i];
      const auto& h = heads_[index(a)];
      out.probs[index(a)] = ad::softmax_rows(ad::linear(states[i], tape.param(*h.w), tape.param(*h.b)));
    }
    return out;
  }

  /// Row-stochastic task distributions in eval mode.
  std::array<Matrix<T>, 3> distributions(std::span<const int> token_ids) const {
    Tape<T> tape;
    auto r = forward(tape, token_ids, false);
    std::array<Matrix<T>, 3> out;
    for (Aspect a : kAspects)
      if (r.probs[index(a)]) out[index(a)] = r.probs[index(a)]->value();
    return out;
  }

  /// Argmax of the semantic head per token, ties to the lowest label index.
  std::vector<int> predict(std::span<const int> token_ids) const {
    const auto p = distributions(token_ids)[index(Aspect::Semantic)];
    std::vector<int> tags(p.rows(), 0);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < p.cols(); ++j)
        if (p(i, j) > p(i, best)) best = j;
      tags[i] = static_cast<int>(best);
    }
    return tags;
  }

 private:
  ModelConfig config_;
  ParamStore<T> params_;
  EmbeddingTable<T> embedding_;
  std::array<std::vector<EncoderLayerParams<T>>, 3> layers_;
  std::array<TaskHead<T>, 3> heads_{};
};

/// Gold label columns per task; empty spans for inactive aspects.
using GoldColumns = std::array<std::span<const int>, 3>;

/// Per-task summed cross-entropy over unmasked rows (absent for inactive aspects).
template <class T>
std::array<std::optional<Var<T>>, 3> task_loss_sums(const ForwardResult<T>& r, const GoldColumns& gold,
                                                    std::span<const std::uint8_t> mask = {}) {
  std::array<std::optional<Var<T>>, 3> out;
  for (Aspect a : kAspects) {
    if (!r.probs[index(a)]) continue;
    const Var<T> p = *r.probs[index(a)];
    if (gold[index(a)].size() != p.rows()) {
      throw DataError("gold column for " + std::string(aspect_name(a)) + " has " +
                      std::to_string(gold[index(a)].size()) + " labels for " + std::to_string(p.rows()) + " tokens");
    }
    out[index(a)] = ad::cross_entropy_sum(p, gold[index(a)], mask);
  }
  return out;
}

/// Sum over active tasks of weight * per-token mean cross-entropy.
template <class T>
Var<T> joint_loss(const ForwardResult<T>& r, const GoldColumns& gold, std::span<const std::uint8_t> mask = {},
                  std::array<double, 3> weights = {1.0, 1.0, 1.0}) {
  std::optional<Var<T>> total;
  for (Aspect a : kAspects) {
    if (!r.probs[index(a)]) continue;
    const Var<T> p = *r.probs[index(a)];
    if (gold[index(a)].size() != p.rows()) {
      throw DataError("gold column for " + std::string(aspect_name(a)) + " has " +
                      std::to_string(gold[index(a)].size()) + " labels for " + std::to_string(p.rows()) + " tokens");
    }
    Var<T> l = ad::scale(ad::cross_entropy(p, gold[index(a)], mask), static_cast<T>(weights[index(a)]));
    total = total ? ad::add(*total, l) : l;
  }
  if (!total) throw ConfigError("joint_loss: no active task");
  return *total;
}

}  // namespace mcdre
