#pragma once

// Reverse-mode differentiation over Matrix values. A Tape records every op
// executed in a forward pass; backward() walks the records in exact reverse
// order and accumulates gradients into the ParamSlots that fed the graph.
//
// Ops never broadcast implicitly: row-vector additions go through add_row().

#include <cmath>
#include <deque>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mcdre/error.hpp"
#include "mcdre/rng.hpp"
#include "mcdre/tensor.hpp"

namespace mcdre {

template <class T>
struct ParamSlot {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool trainable = true;

  void zero_grad() { grad = Matrix<T>(value.rows(), value.cols()); }
};

/// Owns the named parameters of a model. Slot addresses are stable.
template <class T>
class ParamStore {
 public:
  ParamSlot<T>& add(std::string name, Matrix<T> init, bool trainable = true) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    auto slot = std::make_unique<ParamSlot<T>>();
    slot->name = name;
    slot->grad = Matrix<T>(init.rows(), init.cols());
    slot->value = std::move(init);
    slot->trainable = trainable;
    index_.emplace(std::move(name), slots_.size());
    slots_.push_back(std::move(slot));
    return *slots_.back();
  }

  ParamSlot<T>* find(const std::string& name) noexcept {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : slots_[it->second].get();
  }
  const ParamSlot<T>* find(const std::string& name) const noexcept {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : slots_[it->second].get();
  }
  ParamSlot<T>& at(const std::string& name) {
    auto* p = find(name);
    if (p == nullptr) throw ConfigError("unknown parameter '" + name + "'");
    return *p;
  }

  std::size_t size() const noexcept { return slots_.size(); }
  ParamSlot<T>& operator[](std::size_t i) noexcept { return *slots_[i]; }
  const ParamSlot<T>& operator[](std::size_t i) const noexcept { return *slots_[i]; }

  void zero_grad() {
    for (auto& s : slots_) s->zero_grad();
  }

  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<ParamSlot<T>>> slots_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Tape;

/// Handle to a node recorded on a tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, {}); }

  /// Leaf bound to a parameter; repeated calls for one slot share a node.
  Var<T> param(ParamSlot<T>& slot) {
    if (auto it = bound_.find(&slot); it != bound_.end()) return Var<T>{this, it->second};
    auto v = push(slot.value, slot.trainable, {});
    if (slot.trainable) nodes_[v.id].slot = &slot;
    bound_.emplace(&slot, v.id);
    return v;
  }

  Var<T> push(Matrix<T> value, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  const Matrix<T>& value(Var<T> v) const { return node(v).value; }
  bool needs_grad(Var<T> v) const { return node(v).needs_grad; }

  /// Gradient of the last backward() w.r.t. v (zeros if v was unreachable).
  Matrix<T> grad(Var<T> v) const {
    const Node& n = node(v);
    if (n.grad.empty() && !n.value.empty()) return Matrix<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Accumulates into the gradient buffer of node `id`.
  void accumulate(std::size_t id, const Matrix<T>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    auto dst = n.grad.values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  Matrix<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Reverse pass from a 1x1 loss node; adds d loss / d theta into every
  /// reachable trainable ParamSlot's grad.
  void backward(Var<T> loss) {
    check(loss);
    const Node& l = nodes_[loss.id];
    if (l.value.rows() != 1 || l.value.cols() != 1) {
      throw GraphError("backward: loss must be 1x1, got " + l.value.shape());
    }
    for (auto& n : nodes_) n.grad = Matrix<T>();
    if (!l.needs_grad) return;
    nodes_[loss.id].grad = Matrix<T>(1, 1, T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.slot != nullptr) {
        auto dst = n.slot->grad.values();
        auto src = n.grad.values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  void clear() {
    nodes_.clear();
    bound_.clear();
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  void check(Var<T> v) const {
    if (v.tape != this || v.id >= nodes_.size()) {
      throw GraphError("node " + std::to_string(v.id) + " is not recorded on this tape");
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    Backward backward;
    ParamSlot<T>* slot = nullptr;
    bool needs_grad = false;
  };

  const Node& node(Var<T> v) const {
    check(v);
    return nodes_[v.id];
  }

  std::deque<Node> nodes_;  // deque keeps value references stable across push
  std::unordered_map<const ParamSlot<T>*, std::size_t> bound_;
};

template <class T>
const Matrix<T>& Var<T>::value() const {
  if (tape == nullptr) throw GraphError("detached variable");
  return tape->value(*this);
}

namespace ad {

namespace detail {

template <class T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
  if (a.tape == nullptr || a.tape != b.tape) throw GraphError("operands recorded on different tapes");
  a.tape->check(a);
  a.tape->check(b);
  return *a.tape;
}

template <class T>
Tape<T>& tape_of(Var<T> a) {
  if (a.tape == nullptr) throw GraphError("detached variable");
  a.tape->check(a);
  return *a.tape;
}

}  // namespace detail

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.push(mcdre::matmul(t.value(a), t.value(b)), ng, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.needs_grad(a)) tp.accumulate(a.id, mcdre::matmul_nt(g, tp.value(b)));
    if (tp.needs_grad(b)) tp.accumulate(b.id, mcdre::matmul_tn(tp.value(a), g));
  });
}

/// a * b^T
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.push(mcdre::matmul_nt(t.value(a), t.value(b)), ng, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.needs_grad(a)) tp.accumulate(a.id, mcdre::matmul(g, tp.value(b)));
    if (tp.needs_grad(b)) tp.accumulate(b.id, mcdre::matmul_tn(g, tp.value(a)));
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  mcdre::detail::require(av.same_shape(bv), "add", av.shape(), bv.shape());
  Matrix<T> out = av;
  auto o = out.values();
  auto s = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s[i];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.push(std::move(out), ng, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, g);
  });
}

/// a + 1 * bias, bias is 1 x cols.
template <class T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  auto& t = detail::same_tape(a, bias);
  const auto& av = t.value(a);
  const auto& bv = t.value(bias);
  mcdre::detail::require(bv.rows() == 1 && bv.cols() == av.cols(), "add_row", av.shape(), bv.shape());
  Matrix<T> out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv(0, j);
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(bias);
  return t.push(std::move(out), ng, [a, bias](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a.id, g);
    if (tp.needs_grad(bias)) {
      Matrix<T> gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      tp.accumulate(bias.id, gb);
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  auto& t = detail::tape_of(a);
  Matrix<T> out = t.value(a);
  for (auto& v : out.values()) v *= s;
  return t.push(std::move(out), t.needs_grad(a), [a, s](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> ga = g;
    for (auto& v : ga.values()) v *= s;
    tp.accumulate(a.id, ga);
  });
}

template <class T>
Var<T> relu(Var<T> a) {
  auto& t = detail::tape_of(a);
  Matrix<T> out = t.value(a);
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  return t.push(std::move(out), t.needs_grad(a), [a](Tape<T>& tp, const Matrix<T>& g) {
    const auto& x = tp.value(a);
    Matrix<T> ga = g;
    auto gv = ga.values();
    auto xv = x.values();
    for (std::size_t i = 0; i < gv.size(); ++i)
      if (!(xv[i] > T{0})) gv[i] = T{0};
    tp.accumulate(a.id, ga);
  });
}

/// Row softmax; columns >= valid_cols are masked keys.
template <class T>
Var<T> softmax_rows(Var<T> a, std::size_t valid_cols = std::numeric_limits<std::size_t>::max()) {
  auto& t = detail::tape_of(a);
  Matrix<T> out = mcdre::softmax_rows(t.value(a), valid_cols);
  const std::size_t id = t.size();
  return t.push(std::move(out), t.needs_grad(a), [a, id](Tape<T>& tp, const Matrix<T>& g) {
    const auto& p = tp.value(Var<T>{&tp, id});
    Matrix<T> ga(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      T dot{0};
      for (std::size_t j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
      for (std::size_t j = 0; j < p.cols(); ++j) ga(i, j) = p(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(a.id, ga);
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps = kLayerNormEps) {
  auto& t = detail::same_tape(x, gain);
  detail::same_tape(x, bias);
  Matrix<T> out = mcdre::layer_norm(t.value(x), t.value(gain), t.value(bias), eps);
  const bool ng = t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias);
  return t.push(std::move(out), ng, [x, gain, bias, eps](Tape<T>& tp, const Matrix<T>& g) {
    const auto& xv = tp.value(x);
    const auto& gv = tp.value(gain);
    const std::size_t n = xv.cols();
    const T nf = static_cast<T>(n);
    Matrix<T> gx(xv.rows(), n);
    Matrix<T> ggain(1, n);
    Matrix<T> gbias(1, n);
    std::vector<T> xhat(n);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      auto in = xv.row(i);
      T mean{0};
      for (T v : in) mean += v;
      mean /= nf;
      T var{0};
      for (T v : in) var += (v - mean) * (v - mean);
      var /= nf;
      const T rstd = T{1} / std::sqrt(var + static_cast<T>(eps));
      T sum_dy{0};
      T sum_dy_xhat{0};
      for (std::size_t j = 0; j < n; ++j) {
        xhat[j] = (in[j] - mean) * rstd;
        const T dy = g(i, j) * gv(0, j);
        sum_dy += dy;
        sum_dy_xhat += dy * xhat[j];
        ggain(0, j) += g(i, j) * xhat[j];
        gbias(0, j) += g(i, j);
      }
      for (std::size_t j = 0; j < n; ++j) {
        const T dy = g(i, j) * gv(0, j);
        gx(i, j) = rstd * (dy - sum_dy / nf - xhat[j] * sum_dy_xhat / nf);
      }
    }
    tp.accumulate(x.id, gx);
    tp.accumulate(gain.id, ggain);
    tp.accumulate(bias.id, gbias);
  });
}

template <class T>
Var<T> concat_features(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_features: no parts");
  auto& t = detail::tape_of(parts[0]);
  std::vector<Matrix<T>> values;
  values.reserve(parts.size());
  bool ng = false;
  for (auto p : parts) {
    detail::same_tape(parts[0], p);
    values.push_back(t.value(p));
    ng = ng || t.needs_grad(p);
  }
  std::vector<Var<T>> ins(parts.begin(), parts.end());
  return t.push(mcdre::concat_features(std::span<const Matrix<T>>(values)), ng,
                [ins](Tape<T>& tp, const Matrix<T>& g) {
                  std::size_t off = 0;
                  for (auto p : ins) {
                    const std::size_t c = tp.value(p).cols();
                    if (tp.needs_grad(p)) {
                      Matrix<T> gp(g.rows(), c);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < c; ++j) gp(i, j) = g(i, off + j);
                      tp.accumulate(p.id, gp);
                    }
                    off += c;
                  }
                });
}

template <class T>
Var<T> concat_features(std::initializer_list<Var<T>> parts) {
  return concat_features(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <class T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  auto& t = detail::tape_of(a);
  const auto& av = t.value(a);
  if (begin + count > av.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of " + av.shape());
  }
  Matrix<T> out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  return t.push(std::move(out), t.needs_grad(a), [a, begin, count](Tape<T>& tp, const Matrix<T>& g) {
    auto& ga = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) ga(i, begin + j) += g(i, j);
  });
}

/// Row gather: out[i] = table[ids[i]].
template <class T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids) {
  auto& t = detail::tape_of(table);
  const auto& tv = t.value(table);
  Matrix<T> out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw DataError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                      " outside vocabulary of " + std::to_string(tv.rows()));
    }
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return t.push(std::move(out), t.needs_grad(table), [table, idv](Tape<T>& tp, const Matrix<T>& g) {
    auto& gt = tp.grad_buffer(table.id);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      auto dst = gt.row(static_cast<std::size_t>(idv[i]));
      auto src = g.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

/// Inverted dropout. Identity (no tape record) in eval mode or at rate 0.
template <class T>
Var<T> dropout(Var<T> a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return a;
  auto& t = detail::tape_of(a);
  const auto& av = t.value(a);
  Matrix<T> mask(av.rows(), av.cols());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask.values()) m = rng.uniform01() < rate ? T{0} : keep_scale;
  Matrix<T> out = av;
  auto o = out.values();
  auto mv = mask.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mv[i];
  return t.push(std::move(out), t.needs_grad(a), [a, mask](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> ga = g;
    auto gv = ga.values();
    auto mv2 = mask.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= mv2[i];
    tp.accumulate(a.id, ga);
  });
}

/// Probability floor inside the log of cross-entropy.
inline constexpr double kProbFloor = 1e-12;

namespace detail {

template <class T>
void check_labels(const Matrix<T>& probs, std::span<const int> gold, std::span<const std::uint8_t> mask) {
  if (gold.size() != probs.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(gold.size()) + " labels for " +
                         std::to_string(probs.rows()) + " rows");
  }
  if (!mask.empty() && mask.size() != probs.rows()) {
    throw DimensionError("cross_entropy: mask length " + std::to_string(mask.size()) + " for " +
                         std::to_string(probs.rows()) + " rows");
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= probs.cols()) {
      throw DataError("label " + std::to_string(gold[i]) + " at row " + std::to_string(i) + " outside " +
                      std::to_string(probs.cols()) + " classes");
    }
  }
}

}  // namespace detail

/// Sum over unmasked rows of -log(max(p[row, gold], floor)). Empty mask means all rows.
template <class T>
Var<T> cross_entropy_sum(Var<T> probs, std::span<const int> gold, std::span<const std::uint8_t> mask = {}) {
  auto& t = detail::tape_of(probs);
  const auto& p = t.value(probs);
  detail::check_labels(p, gold, mask);
  std::vector<int> g(gold.begin(), gold.end());
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  T loss{0};
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!m.empty() && !m[i]) continue;
    loss -= std::log(std::max(p(i, static_cast<std::size_t>(g[i])), static_cast<T>(kProbFloor)));
  }
  return t.push(Matrix<T>(1, 1, loss), t.needs_grad(probs), [probs, g, m](Tape<T>& tp, const Matrix<T>& og) {
    const auto& pv = tp.value(probs);
    auto& gp = tp.grad_buffer(probs.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!m.empty() && !m[i]) continue;
      const T pr = pv(i, static_cast<std::size_t>(g[i]));
      if (pr >= static_cast<T>(kProbFloor)) gp(i, static_cast<std::size_t>(g[i])) -= og(0, 0) / pr;
    }
  });
}

/// Mean over unmasked rows of -log p[row, gold]; zero when every row is masked.
template <class T>
Var<T> cross_entropy(Var<T> probs, std::span<const int> gold, std::span<const std::uint8_t> mask = {}) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (mask.empty() || (i < mask.size() && mask[i])) ++n;
  auto s = cross_entropy_sum(probs, gold, mask);
  return scale(s, n == 0 ? T{0} : T{1} / static_cast<T>(n));
}

template <class T>
Var<T> sum_all(Var<T> a) {
  auto& t = detail::tape_of(a);
  T s{0};
  for (T v : t.value(a).values()) s += v;
  return t.push(Matrix<T>(1, 1, s), t.needs_grad(a), [a](Tape<T>& tp, const Matrix<T>& g) {
    const auto& av = tp.value(a);
    tp.accumulate(a.id, Matrix<T>(av.rows(), av.cols(), g(0, 0)));
  });
}

/// x * W + b
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  return add_row(matmul(x, w), b);
}

}  // namespace ad

}  // namespace mcdre
