#pragma once

// Transformer encoder building blocks: embeddings, multi-head attention,
// the position-wise FFN and the post-norm residual sublayer. The cross
// mechanisms in cross.hpp assemble these into full layers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdre/autodiff.hpp"
#include "mcdre/rng.hpp"
#include "mcdre/tensor.hpp"

namespace mcdre {

struct EncoderShape {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;

  std::size_t d_head() const { return d_model / n_heads; }

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_ff == 0) throw ConfigError("encoder sizes must be positive");
    if (d_model % n_heads != 0) {
      throw ConfigError("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                        std::to_string(d_model) + ")");
    }
  }
};

template <class T>
struct AttentionHeadParams {
  ParamSlot<T>* wq = nullptr;  // d_model x d_head
  ParamSlot<T>* wk = nullptr;  // kv_width x d_head
  ParamSlot<T>* wv = nullptr;  // kv_width x d_head
};

template <class T>
struct EncoderLayerParams {
  std::vector<AttentionHeadParams<T>> heads;
  ParamSlot<T>* w_out = nullptr;  // (n_heads * d_head) x d_model, also adjusts crossed widths back
  ParamSlot<T>* b_out = nullptr;
  ParamSlot<T>* w1 = nullptr;
  ParamSlot<T>* b1 = nullptr;
  ParamSlot<T>* w2 = nullptr;
  ParamSlot<T>* b2 = nullptr;
  ParamSlot<T>* ln1_gain = nullptr;
  ParamSlot<T>* ln1_bias = nullptr;
  ParamSlot<T>* ln2_gain = nullptr;
  ParamSlot<T>* ln2_bias = nullptr;
  // Present only for attention and feedforward crosses.
  ParamSlot<T>* w_cross = nullptr;  // (n_foreign * d_model) x d_model
  ParamSlot<T>* b_cross = nullptr;

  std::size_t d_model = 0;
  std::size_t d_head = 0;
  std::size_t kv_width = 0;

  std::size_t cross_width() const { return w_cross == nullptr ? 0 : w_cross->value.rows(); }
};

/// Intermediate states of one layer that other encoders may consume.
template <class T>
struct LayerTapState {
  Var<T> attn_input;   // hidden states entering attention
  Var<T> attn_output;  // after heads and W_out, before the residual
  Var<T> ffn_output;   // FFN(h), before the residual
};

/// Scaled uniform (Glorot) initialisation from a stream keyed by the parameter name.
template <class T>
Matrix<T> glorot_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed, const std::string& name) {
  Rng rng = Rng::derive(seed, name);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<T> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

/// Registers one layer's parameters under `prefix` ("se.layer0" etc.).
/// kv_width is the width of the key/value source; cross_width > 0 adds W_cross.
template <class T>
EncoderLayerParams<T> make_encoder_layer(ParamStore<T>& store, const std::string& prefix, const EncoderShape& shape,
                                         std::size_t kv_width, std::size_t cross_width, std::uint64_t seed) {
  shape.validate();
  const std::size_t d = shape.d_model;
  const std::size_t dh = shape.d_head();
  EncoderLayerParams<T> p;
  p.d_model = d;
  p.d_head = dh;
  p.kv_width = kv_width;
  auto weight = [&](const std::string& n, std::size_t r, std::size_t c) {
    const std::string full = prefix + "." + n;
    return &store.add(full, glorot_uniform<T>(r, c, seed, full));
  };
  auto constant = [&](const std::string& n, std::size_t c, T v) {
    return &store.add(prefix + "." + n, Matrix<T>(1, c, v));
  };
  for (std::size_t h = 0; h < shape.n_heads; ++h) {
    const std::string hp = "head" + std::to_string(h) + ".";
    p.heads.push_back({weight(hp + "WQ", d, dh), weight(hp + "WK", kv_width, dh), weight(hp + "WV", kv_width, dh)});
  }
  p.w_out = weight("attn_out.W", shape.n_heads * dh, d);
  p.b_out = constant("attn_out.b", d, T{0});
  p.w1 = weight("ffn.W1", d, shape.d_ff);
  p.b1 = constant("ffn.b1", shape.d_ff, T{0});
  p.w2 = weight("ffn.W2", shape.d_ff, d);
  p.b2 = constant("ffn.b2", d, T{0});
  p.ln1_gain = constant("ln1.gain", d, T{1});
  p.ln1_bias = constant("ln1.bias", d, T{0});
  p.ln2_gain = constant("ln2.gain", d, T{1});
  p.ln2_bias = constant("ln2.bias", d, T{0});
  if (cross_width > 0) {
    p.w_cross = weight("cross.W", cross_width, d);
    p.b_cross = constant("cross.b", d, T{0});
  }
  return p;
}

/// Fixed sinusoidal encoding: sin on even features, cos on odd ones.
template <class T>
Matrix<T> sinusoidal_positions(std::size_t length, std::size_t d_model) {
  Matrix<T> pe(length, d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t j = 0; j < d_model; ++j) {
      const double pair = static_cast<double>(j - j % 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(d_model));
      pe(pos, j) = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

/// Token lookup shared by every encoder. Frozen tables come from an external
/// file and never receive updates; a width other than d_model gets a trainable
/// input projection.
template <class T>
struct EmbeddingTable {
  ParamSlot<T>* table = nullptr;
  ParamSlot<T>* proj_w = nullptr;
  ParamSlot<T>* proj_b = nullptr;
  bool frozen = false;
  std::optional<int> unk_id;

  std::size_t vocab_size() const { return table->value.rows(); }
};

template <class T>
Var<T> embed(Tape<T>& tape, std::span<const int> token_ids, const EmbeddingTable<T>& emb, bool positions,
             double dropout_rate, bool training, Rng* rng) {
  const std::size_t vocab = emb.vocab_size();
  std::vector<int> ids(token_ids.begin(), token_ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < vocab) continue;
    if (!emb.unk_id) {
      throw DataError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                      " outside vocabulary of " + std::to_string(vocab));
    }
    ids[i] = *emb.unk_id;
  }
  Var<T> x = ad::gather_rows(tape.param(*emb.table), std::span<const int>(ids));
  if (emb.proj_w != nullptr) x = ad::linear(x, tape.param(*emb.proj_w), tape.param(*emb.proj_b));
  const std::size_t d = x.cols();
  if (positions && !ids.empty()) x = ad::add(x, tape.constant(sinusoidal_positions<T>(ids.size(), d)));
  if (training && dropout_rate > 0.0) x = ad::dropout(x, dropout_rate, training, *rng);
  return x;
}

template <class T>
struct AttentionOutput {
  Var<T> output;                 // L x d_model
  std::vector<Var<T>> weights;   // per head, L x L_kv
};

/// Per head softmax(Q WQ (K WK)^T / sqrt(d_head)) V WV; heads concatenated
/// on the feature axis and passed through W_out. Keys at index >= valid_keys
/// are masked.
template <class T>
AttentionOutput<T> multi_head_attention(Var<T> q_src, Var<T> kv_src, const EncoderLayerParams<T>& p,
                                        std::size_t valid_keys = std::numeric_limits<std::size_t>::max()) {
  Tape<T>& tape = *q_src.tape;
  if (q_src.cols() != p.d_model) {
    throw DimensionError("attention query source " + q_src.value().shape() + " for d_model " +
                         std::to_string(p.d_model));
  }
  if (kv_src.cols() != p.kv_width) {
    throw DimensionError("attention key/value source " + kv_src.value().shape() + " for key width " +
                         std::to_string(p.kv_width));
  }
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.d_head)));
  AttentionOutput<T> out;
  std::vector<Var<T>> heads;
  heads.reserve(p.heads.size());
  for (const auto& h : p.heads) {
    Var<T> q = ad::matmul(q_src, tape.param(*h.wq));
    Var<T> k = ad::matmul(kv_src, tape.param(*h.wk));
    Var<T> v = ad::matmul(kv_src, tape.param(*h.wv));
    Var<T> w = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt), valid_keys);
    out.weights.push_back(w);
    heads.push_back(ad::matmul(w, v));
  }
  Var<T> cat = heads.size() == 1 ? heads[0] : ad::concat_features(std::span<const Var<T>>(heads));
  out.output = ad::linear(cat, tape.param(*p.w_out), tape.param(*p.b_out));
  return out;
}

/// relu(x W1 + b1) W2 + b2
template <class T>
Var<T> feed_forward(Var<T> x, const EncoderLayerParams<T>& p) {
  Tape<T>& tape = *x.tape;
  Var<T> hidden = ad::relu(ad::linear(x, tape.param(*p.w1), tape.param(*p.b1)));
  return ad::linear(hidden, tape.param(*p.w2), tape.param(*p.b2));
}

/// LayerNorm(x + dropout(contribution)).
template <class T>
Var<T> residual_norm(Var<T> x, Var<T> contribution, ParamSlot<T>& gain, ParamSlot<T>& bias, double dropout_rate,
                     bool training, Rng* rng) {
  Tape<T>& tape = *x.tape;
  if (training && dropout_rate > 0.0) contribution = ad::dropout(contribution, dropout_rate, training, *rng);
  return ad::layer_norm(ad::add(x, contribution), tape.param(gain), tape.param(bias));
}

}  // namespace mcdre
