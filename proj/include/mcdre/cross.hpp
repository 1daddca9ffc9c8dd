#pragma once

// Cross-integration between the aspect encoders.
//
//   key-value:   attention of the own states over concat(foreign layer inputs)
//   attention:   LayerNorm(x + W_cross concat(foreign attention outputs))
//   feedforward: LayerNorm(h + W_cross concat(foreign FFN outputs))
//
// The own attention/FFN output is exported to the other encoders but left out
// of the own residual path unless include_own is set. Exchange is synchronous:
// every encoder's layer l reads the other encoders' layer-l taps.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mcdre/autodiff.hpp"
#include "mcdre/encoder.hpp"
#include "mcdre/types.hpp"

namespace mcdre {

/// Per-encoder knobs for one layer evaluation.
struct LayerContext {
  double dropout = 0.0;
  bool training = false;
  Rng* rng = nullptr;
  std::size_t valid_len = std::numeric_limits<std::size_t>::max();
  bool include_own = false;
};

template <class T>
struct LayerOutput {
  Var<T> y;
  LayerTapState<T> tap;
  std::vector<Var<T>> attention_weights;
};

namespace detail {

template <class T>
void require_rows(Var<T> own, std::span<const Var<T>> others, const char* what) {
  for (auto o : others) {
    if (o.rows() != own.rows() || o.cols() != own.cols()) {
      throw WiringError(std::string(what) + ": companion state " + o.value().shape() + " does not match own " +
                        own.value().shape());
    }
  }
}

template <class T>
void require_cross(const EncoderLayerParams<T>& p, std::size_t n_foreign, const char* what) {
  if (n_foreign == 0) throw WiringError(std::string(what) + ": no companion encoder states supplied");
  if (p.w_cross == nullptr || p.cross_width() != n_foreign * p.d_model) {
    throw WiringError(std::string(what) + ": cross projection expects " + std::to_string(p.cross_width()) +
                      " input features, companions supply " + std::to_string(n_foreign * p.d_model));
  }
}

}  // namespace detail

/// Own states as queries; keys and values drawn from the feature-axis
/// concatenation of the companion encoders' layer inputs.
template <class T>
AttentionOutput<T> kv_cross_attention(Var<T> x_own, std::span<const Var<T>> x_foreign, const EncoderLayerParams<T>& p,
                                      bool include_own = false,
                                      std::size_t valid_len = std::numeric_limits<std::size_t>::max()) {
  if (x_foreign.empty()) throw WiringError("key-value cross: no companion encoder states supplied");
  detail::require_rows(x_own, x_foreign, "key-value cross");
  std::vector<Var<T>> parts;
  if (include_own) parts.push_back(x_own);
  parts.insert(parts.end(), x_foreign.begin(), x_foreign.end());
  if (parts.size() * p.d_model != p.kv_width) {
    throw WiringError("key-value cross: key width " + std::to_string(p.kv_width) + " but " +
                      std::to_string(parts.size()) + " sources of width " + std::to_string(p.d_model));
  }
  Var<T> kv = parts.size() == 1 ? parts[0] : ad::concat_features(std::span<const Var<T>>(parts));
  return multi_head_attention(x_own, kv, p, valid_len);
}

/// LayerNorm(x_own + W_cross concat(foreign attention outputs)) with the ln1 parameters.
template <class T>
Var<T> attention_cross_sublayer(Var<T> x_own, Var<T> attn_own, std::span<const Var<T>> attn_foreign,
                                const EncoderLayerParams<T>& p, const LayerContext& ctx) {
  detail::require_cross(p, attn_foreign.size(), "attention cross");
  detail::require_rows(x_own, attn_foreign, "attention cross");
  Tape<T>& tape = *x_own.tape;
  Var<T> cat = attn_foreign.size() == 1 ? attn_foreign[0] : ad::concat_features(attn_foreign);
  Var<T> contribution = ad::linear(cat, tape.param(*p.w_cross), tape.param(*p.b_cross));
  if (ctx.include_own) contribution = ad::add(contribution, attn_own);
  return residual_norm(x_own, contribution, *p.ln1_gain, *p.ln1_bias, ctx.dropout, ctx.training, ctx.rng);
}

/// LayerNorm(h_own + W_cross concat(foreign FFN outputs)) with the ln2 parameters.
template <class T>
Var<T> feedforward_cross_sublayer(Var<T> h_own, Var<T> ffn_own, std::span<const Var<T>> ffn_foreign,
                                  const EncoderLayerParams<T>& p, const LayerContext& ctx) {
  detail::require_cross(p, ffn_foreign.size(), "feedforward cross");
  detail::require_rows(h_own, ffn_foreign, "feedforward cross");
  Tape<T>& tape = *h_own.tape;
  Var<T> cat = ffn_foreign.size() == 1 ? ffn_foreign[0] : ad::concat_features(ffn_foreign);
  Var<T> contribution = ad::linear(cat, tape.param(*p.w_cross), tape.param(*p.b_cross));
  if (ctx.include_own) contribution = ad::add(contribution, ffn_own);
  return residual_norm(h_own, contribution, *p.ln2_gain, *p.ln2_bias, ctx.dropout, ctx.training, ctx.rng);
}

namespace detail {

// The five phases of a layer. wire_step runs each phase across all encoders
// before moving on; encoder_layer_forward runs them back to back for one.

template <class T>
AttentionOutput<T> phase_attention(Var<T> x, std::span<const Var<T>> foreign_inputs, CrossMode mode,
                                   const EncoderLayerParams<T>& p, const LayerContext& ctx) {
  if (mode == CrossMode::KeyValue) return kv_cross_attention(x, foreign_inputs, p, ctx.include_own, ctx.valid_len);
  return multi_head_attention(x, x, p, ctx.valid_len);
}

template <class T>
Var<T> phase_sublayer1(Var<T> x, Var<T> attn, std::span<const Var<T>> foreign_attn, CrossMode mode,
                       const EncoderLayerParams<T>& p, const LayerContext& ctx) {
  if (mode == CrossMode::Attention) return attention_cross_sublayer(x, attn, foreign_attn, p, ctx);
  return residual_norm(x, attn, *p.ln1_gain, *p.ln1_bias, ctx.dropout, ctx.training, ctx.rng);
}

template <class T>
Var<T> phase_sublayer2(Var<T> h, Var<T> ffn, std::span<const Var<T>> foreign_ffn, CrossMode mode,
                       const EncoderLayerParams<T>& p, const LayerContext& ctx) {
  if (mode == CrossMode::FeedForward) return feedforward_cross_sublayer(h, ffn, foreign_ffn, p, ctx);
  return residual_norm(h, ffn, *p.ln2_gain, *p.ln2_bias, ctx.dropout, ctx.training, ctx.rng);
}

}  // namespace detail

/// One encoder layer. `foreign` holds the other encoders' layer taps and must
/// be non-empty exactly when mode is a cross mode.
template <class T>
LayerOutput<T> encoder_layer_forward(Var<T> x, std::span<const LayerTapState<T>> foreign, CrossMode mode,
                                     const EncoderLayerParams<T>& p, const LayerContext& ctx) {
  if (mode != CrossMode::NoExchange && foreign.empty()) {
    throw WiringError(std::string(cross_mode_name(mode)) + " cross requested without companion encoder states");
  }
  if (mode == CrossMode::NoExchange && !foreign.empty()) {
    throw WiringError("companion encoder states supplied to a no-exchange layer");
  }
  std::vector<Var<T>> f_in, f_attn, f_ffn;
  for (const auto& s : foreign) {
    f_in.push_back(s.attn_input);
    f_attn.push_back(s.attn_output);
    f_ffn.push_back(s.ffn_output);
  }
  LayerOutput<T> out;
  out.tap.attn_input = x;
  auto attn = detail::phase_attention<T>(x, f_in, mode, p, ctx);
  out.tap.attn_output = attn.output;
  out.attention_weights = std::move(attn.weights);
  Var<T> h = detail::phase_sublayer1<T>(x, attn.output, f_attn, mode, p, ctx);
  out.tap.ffn_output = feed_forward(h, p);
  out.y = detail::phase_sublayer2<T>(h, out.tap.ffn_output, f_ffn, mode, p, ctx);
  return out;
}

/// One encoder's inputs to a synchronous exchange step.
template <class T>
struct WireInput {
  Var<T> x;
  const EncoderLayerParams<T>* params = nullptr;
  std::size_t layer = 0;
  LayerContext ctx;
};

/// Advances every active encoder by one layer. Each encoder receives the
/// companion taps its mode requires, in input order with itself skipped.
template <class T>
std::vector<LayerOutput<T>> wire_step(std::span<WireInput<T>> encoders, CrossMode mode) {
  const std::size_t n = encoders.size();
  if (n == 0) return {};
  for (const auto& e : encoders) {
    if (e.layer != encoders[0].layer) {
      throw WiringError("wire_step: encoders at layers " + std::to_string(encoders[0].layer) + " and " +
                        std::to_string(e.layer));
    }
    if (e.x.rows() != encoders[0].x.rows()) {
      throw WiringError("wire_step: sequence lengths " + std::to_string(encoders[0].x.rows()) + " and " +
                        std::to_string(e.x.rows()));
    }
  }
  if (mode != CrossMode::NoExchange && n < 2) {
    throw WiringError(std::string(cross_mode_name(mode)) + " cross needs at least two active encoders");
  }
  auto others = [&](const std::vector<Var<T>>& all, std::size_t self) {
    std::vector<Var<T>> o;
    if (mode == CrossMode::NoExchange) return o;
    for (std::size_t j = 0; j < n; ++j)
      if (j != self) o.push_back(all[j]);
    return o;
  };

  std::vector<LayerOutput<T>> out(n);
  std::vector<Var<T>> inputs(n), attn(n), hidden(n), ffn(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = encoders[i].x;
    out[i].tap.attn_input = inputs[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = others(inputs, i);
    auto a = detail::phase_attention<T>(inputs[i], f, mode, *encoders[i].params, encoders[i].ctx);
    attn[i] = a.output;
    out[i].tap.attn_output = a.output;
    out[i].attention_weights = std::move(a.weights);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = others(attn, i);
    hidden[i] = detail::phase_sublayer1<T>(inputs[i], attn[i], f, mode, *encoders[i].params, encoders[i].ctx);
    ffn[i] = feed_forward(hidden[i], *encoders[i].params);
    out[i].tap.ffn_output = ffn[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = others(ffn, i);
    out[i].y = detail::phase_sublayer2<T>(hidden[i], ffn[i], f, mode, *encoders[i].params, encoders[i].ctx);
  }
  return out;
}

}  // namespace mcdre
