#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mcdre/cross.hpp"
#include "reference.hpp"

namespace mcdre {
namespace {

namespace ref = reference;

Matrix<double> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix<double> m(r, c);
  for (auto& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

void perturb_all(ParamStore<double>& ps, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (auto& v : ps[i].value.values()) v += rng.uniform(-0.3, 0.3);
}

void expect_close(const Matrix<double>& got, const ref::Mat& want, double tol) {
  ASSERT_EQ(got.rows(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want[i].size(); ++j) EXPECT_NEAR(got(i, j), want[i][j], tol) << i << "," << j;
}

struct Layer {
  ParamStore<double> ps;
  EncoderLayerParams<double> p;
  Layer(std::size_t d, std::size_t heads, std::size_t kv, std::size_t cross, std::uint64_t seed = 1) {
    p = make_encoder_layer<double>(ps, "se.layer0", {d, heads, 2 * d}, kv, cross, seed);
    perturb_all(ps, seed + 50);
  }
};

TEST(KeyValueCross, ZeroSecondBlockReducesToSelfAttention) {
  const std::size_t d = 4;
  Layer cross(d, 2, 2 * d, 0, 3);
  Layer self(d, 2, d, 0, 4);
  // copy the first key/value block of the crossed layer into the plain layer
  for (std::size_t h = 0; h < 2; ++h) {
    auto& ch = cross.p.heads[h];
    auto& sh = self.p.heads[h];
    sh.wq->value = ch.wq->value;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < cross.p.d_head; ++c) {
        sh.wk->value(r, c) = ch.wk->value(r, c);
        sh.wv->value(r, c) = ch.wv->value(r, c);
        ch.wk->value(d + r, c) = 0;
        ch.wv->value(d + r, c) = 0;
      }
  }
  self.p.w_out->value = cross.p.w_out->value;
  self.p.b_out->value = cross.p.b_out->value;
  Tape<double> tape;
  auto x = tape.constant(random_matrix(5, d, 7));
  const std::vector<Var<double>> others{x, x};
  const auto crossed = kv_cross_attention<double>(x, others, cross.p).output.value();
  const auto& plain = multi_head_attention<double>(x, x, self.p).output.value();
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_NEAR(crossed.values()[i], plain.values()[i], 1e-6);
}

TEST(KeyValueCross, SingleKeyIgnoresQuery) {
  const std::size_t d = 4;
  Layer l(d, 2, 2 * d, 0, 5);
  Tape<double> tape;
  auto x = tape.constant(random_matrix(1, d, 8));
  const auto o1 = tape.constant(random_matrix(1, d, 9));
  const auto o2 = tape.constant(random_matrix(1, d, 10));
  const std::vector<Var<double>> others{o1, o2};
  const auto out = kv_cross_attention<double>(x, others, l.p).output.value();
  // with one key every head returns its value row unchanged
  const auto kv = ref::hcat(ref::from(o1.value()), ref::from(o2.value()));
  ref::Mat cat(1);
  for (const auto& h : l.p.heads) {
    const auto v = ref::mul(kv, ref::from(h.wv->value));
    cat[0].insert(cat[0].end(), v[0].begin(), v[0].end());
  }
  expect_close(out, ref::add_bias(ref::mul(cat, ref::from(l.p.w_out->value)), ref::from(l.p.b_out->value)), 1e-9);

  for (auto& h : l.p.heads) h.wq->value.fill(42.0);
  Tape<double> tape2;
  auto x2 = tape2.constant(x.value());
  const std::vector<Var<double>> others2{tape2.constant(o1.value()), tape2.constant(o2.value())};
  EXPECT_EQ(kv_cross_attention<double>(x2, others2, l.p).output.value(), out);
}

TEST(KeyValueCross, HandSetTwoByTwo) {
  ParamStore<double> ps;
  auto p = make_encoder_layer<double>(ps, "t", {2, 1, 4}, 4, 0, 1);
  p.heads[0].wq->value = Matrix<double>::from_rows({{1, 0}, {0, 1}});
  p.heads[0].wk->value = Matrix<double>::from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}});
  p.heads[0].wv->value = Matrix<double>::from_rows({{1, 0}, {0, 1}, {0, 0}, {2, 0}});
  p.w_out->value = Matrix<double>::from_rows({{1, 0}, {0, 1}});
  Tape<double> tape;
  auto own = tape.constant(Matrix<double>::from_rows({{1, 0}, {0, 1}}));
  auto sy = tape.constant(Matrix<double>::from_rows({{1, 1}, {0, 0}}));
  auto dom = tape.constant(Matrix<double>::from_rows({{0, 0}, {1, 1}}));
  const std::vector<Var<double>> others{sy, dom};
  const auto out = kv_cross_attention<double>(own, others, p);
  // K_new = [sy | do] = [[1,1,0,0],[0,0,1,1]]; K = K_new WK = [[1,1],[1,1]]
  // logits all equal 1/sqrt(2) -> uniform weights 0.5
  // V = K_new WV = [[1,1],[2,0]] -> each output row = [1.5, 0.5]
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(out.weights[0].value()(i, 0), 0.5, 1e-12);
    EXPECT_NEAR(out.output.value()(i, 0), 1.5, 1e-12);
    EXPECT_NEAR(out.output.value()(i, 1), 0.5, 1e-12);
  }
}

TEST(KeyValueCross, LengthMismatchIsWiringError) {
  Layer l(4, 2, 8, 0);
  Tape<double> tape;
  auto x = tape.constant(random_matrix(3, 4, 1));
  const std::vector<Var<double>> others{tape.constant(random_matrix(2, 4, 2)), tape.constant(random_matrix(3, 4, 3))};
  EXPECT_THROW(kv_cross_attention<double>(x, others, l.p), WiringError);
}

TEST(AttentionCross, ZeroForeignOutputsGiveLayerNormOfInput) {
  Layer l(4, 2, 4, 8);
  l.p.b_cross->value.fill(0.0);
  Tape<double> tape;
  const auto xm = random_matrix(3, 4, 11);
  auto x = tape.constant(xm);
  auto own = tape.constant(random_matrix(3, 4, 12));
  const std::vector<Var<double>> foreign{tape.constant(Matrix<double>(3, 4)), tape.constant(Matrix<double>(3, 4))};
  const auto& h = attention_cross_sublayer<double>(x, own, foreign, l.p, {}).value();
  expect_close(h, ref::layer_norm(ref::from(xm), ref::from(l.p.ln1_gain->value), ref::from(l.p.ln1_bias->value)),
               1e-9);
}

TEST(AttentionCross, ShapeLawForAnyLength) {
  Layer l(4, 2, 4, 8);
  for (std::size_t len : {1u, 2u, 9u}) {
    Tape<double> tape;
    auto x = tape.constant(random_matrix(len, 4, len));
    const std::vector<Var<double>> foreign{tape.constant(random_matrix(len, 4, 1)), tape.constant(random_matrix(len, 4, 2))};
    const auto h = attention_cross_sublayer<double>(x, x, foreign, l.p, {});
    EXPECT_EQ(h.rows(), len);
    EXPECT_EQ(h.cols(), 4u);
  }
}

TEST(AttentionCross, FormulaOracleSingleToken) {
  Layer l(2, 1, 2, 4, 6);
  Tape<double> tape;
  const auto xm = Matrix<double>::from_rows({{0.3, -1.2}});
  const auto a1 = Matrix<double>::from_rows({{0.5, 2.0}});
  const auto a2 = Matrix<double>::from_rows({{-1.0, 0.25}});
  const std::vector<Var<double>> foreign{tape.constant(a1), tape.constant(a2)};
  auto own = tape.constant(Matrix<double>::from_rows({{9.0, 9.0}}));
  const auto& h = attention_cross_sublayer<double>(tape.constant(xm), own, foreign, l.p, {}).value();
  const auto& w = l.p.w_cross->value;
  const auto& b = l.p.b_cross->value;
  const double cat[4] = {0.5, 2.0, -1.0, 0.25};
  double pre[2];
  for (int j = 0; j < 2; ++j) {
    double s = b(0, j);
    for (int k = 0; k < 4; ++k) s += cat[k] * w(k, j);
    pre[j] = xm(0, j) + s;
  }
  const double mean = (pre[0] + pre[1]) / 2;
  const double var = ((pre[0] - mean) * (pre[0] - mean) + (pre[1] - mean) * (pre[1] - mean)) / 2;
  for (int j = 0; j < 2; ++j) {
    const double want = (pre[j] - mean) / std::sqrt(var + 1e-5) * l.p.ln1_gain->value(0, j) + l.p.ln1_bias->value(0, j);
    EXPECT_NEAR(h(0, j), want, 1e-6);
  }
}

TEST(AttentionCross, IncludeOwnAddsOwnOutput) {
  Layer l(2, 1, 2, 4, 6);
  Tape<double> tape;
  auto x = tape.constant(Matrix<double>::from_rows({{0.3, -1.2}}));
  auto own = tape.constant(Matrix<double>::from_rows({{0.7, 0.1}}));
  const std::vector<Var<double>> foreign{tape.constant(Matrix<double>(1, 2)), tape.constant(Matrix<double>(1, 2))};
  l.p.b_cross->value.fill(0.0);
  LayerContext ctx;
  ctx.include_own = true;
  const auto& h = attention_cross_sublayer<double>(x, own, foreign, l.p, ctx).value();
  expect_close(h,
               ref::layer_norm(ref::Mat{{1.0, -1.1}}, ref::from(l.p.ln1_gain->value), ref::from(l.p.ln1_bias->value)),
               1e-9);
}

TEST(AttentionCross, MissingCompanionIsWiringError) {
  Layer l(4, 2, 4, 8);
  Tape<double> tape;
  auto x = tape.constant(random_matrix(2, 4, 1));
  EXPECT_THROW(attention_cross_sublayer<double>(x, x, {}, l.p, {}), WiringError);
  const std::vector<Var<double>> one{x};
  EXPECT_THROW(attention_cross_sublayer<double>(x, x, one, l.p, {}), WiringError);
}

TEST(FeedForwardCross, ZeroForeignOutputsGiveLayerNormOfInput) {
  Layer l(4, 2, 4, 8);
  l.p.b_cross->value.fill(0.0);
  Tape<double> tape;
  const auto hm = random_matrix(3, 4, 13);
  const std::vector<Var<double>> foreign{tape.constant(Matrix<double>(3, 4)), tape.constant(Matrix<double>(3, 4))};
  const auto& y = feedforward_cross_sublayer<double>(tape.constant(hm), tape.constant(hm), foreign, l.p, {}).value();
  expect_close(y, ref::layer_norm(ref::from(hm), ref::from(l.p.ln2_gain->value), ref::from(l.p.ln2_bias->value)), 1e-9);
}

TEST(FeedForwardCross, SwappingCompanionsWithBlockSwapIsInvariant) {
  Layer l(4, 2, 4, 8);
  Tape<double> tape;
  auto h = tape.constant(random_matrix(3, 4, 14));
  auto f1 = tape.constant(random_matrix(3, 4, 15));
  auto f2 = tape.constant(random_matrix(3, 4, 16));
  const std::vector<Var<double>> fwd{f1, f2};
  const auto a = feedforward_cross_sublayer<double>(h, h, fwd, l.p, {}).value();
  auto& w = l.p.w_cross->value;
  const auto orig = w;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      w(r, c) = orig(4 + r, c);
      w(4 + r, c) = orig(r, c);
    }
  Tape<double> tape2;
  const std::vector<Var<double>> rev{tape2.constant(f2.value()), tape2.constant(f1.value())};
  const auto& b = feedforward_cross_sublayer<double>(tape2.constant(h.value()), tape2.constant(h.value()), rev, l.p, {}).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-6);
}

TEST(FeedForwardCross, FormulaOracleSingleToken) {
  Layer l(2, 1, 2, 4, 8);
  Tape<double> tape;
  const ref::Mat h{{1.5, 0.2}};
  const ref::Mat f1{{-0.4, 0.9}};
  const ref::Mat f2{{0.0, -2.0}};
  const std::vector<Var<double>> foreign{tape.constant(Matrix<double>::from_rows({{-0.4, 0.9}})),
                                         tape.constant(Matrix<double>::from_rows({{0.0, -2.0}}))};
  auto hv = tape.constant(Matrix<double>::from_rows({{1.5, 0.2}}));
  const auto& y = feedforward_cross_sublayer<double>(hv, hv, foreign, l.p, {}).value();
  const auto contrib =
      ref::add_bias(ref::mul(ref::hcat(f1, f2), ref::from(l.p.w_cross->value)), ref::from(l.p.b_cross->value));
  expect_close(y, ref::layer_norm(ref::add(h, contrib), ref::from(l.p.ln2_gain->value), ref::from(l.p.ln2_bias->value)),
               1e-6);
}

struct Trio {
  ParamStore<double> ps;
  std::vector<EncoderLayerParams<double>> layers;
  Trio(CrossMode mode, std::size_t n, std::size_t d = 4) {
    const std::size_t kv = mode == CrossMode::KeyValue ? (n - 1) * d : d;
    const std::size_t cross = (mode == CrossMode::Attention || mode == CrossMode::FeedForward) ? (n - 1) * d : 0;
    const char* names[] = {"se", "sy", "do"};
    for (std::size_t i = 0; i < n; ++i)
      layers.push_back(make_encoder_layer<double>(ps, std::string(names[i]) + ".layer0", {d, 2, 2 * d}, kv, cross, 5));
    perturb_all(ps, 77);
  }
};

TEST(WireStep, NoExchangeEqualsIndependentLayers) {
  Trio t(CrossMode::NoExchange, 3);
  Tape<double> tape;
  std::vector<WireInput<double>> in(3);
  for (std::size_t i = 0; i < 3; ++i) {
    in[i].x = tape.constant(random_matrix(4, 4, 30 + i));
    in[i].params = &t.layers[i];
  }
  const auto outs = wire_step<double>(in, CrossMode::NoExchange);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto solo = encoder_layer_forward<double>(in[i].x, {}, CrossMode::NoExchange, t.layers[i], {});
    EXPECT_EQ(outs[i].y.value(), solo.y.value());
  }
}

TEST(WireStep, CrossModesMatchPerEncoderForwardWithPrecomputedTaps) {
  for (CrossMode mode : {CrossMode::KeyValue, CrossMode::Attention, CrossMode::FeedForward}) {
    Trio t(mode, 3);
    Tape<double> tape;
    std::vector<WireInput<double>> in(3);
    for (std::size_t i = 0; i < 3; ++i) {
      in[i].x = tape.constant(random_matrix(4, 4, 40 + i));
      in[i].params = &t.layers[i];
    }
    const auto outs = wire_step<double>(in, mode);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<LayerTapState<double>> foreign;
      for (std::size_t j = 0; j < 3; ++j)
        if (j != i) foreign.push_back(outs[j].tap);
      const auto solo = encoder_layer_forward<double>(in[i].x, foreign, mode, t.layers[i], {});
      EXPECT_EQ(outs[i].y.value(), solo.y.value()) << cross_mode_name(mode);
    }
  }
}

TEST(WireStep, TwoEncoderKeyValueUsesSingleWidthKeys) {
  Trio t(CrossMode::KeyValue, 2);
  EXPECT_EQ(t.layers[0].kv_width, 4u);
  EXPECT_EQ(t.layers[0].heads[0].wk->value.rows(), 4u);
  Tape<double> tape;
  std::vector<WireInput<double>> in(2);
  for (std::size_t i = 0; i < 2; ++i) {
    in[i].x = tape.constant(random_matrix(3, 4, 50 + i));
    in[i].params = &t.layers[i];
  }
  const auto outs = wire_step<double>(in, CrossMode::KeyValue);
  EXPECT_EQ(outs[0].y.cols(), 4u);
}

TEST(WireStep, InconsistentLayersIsWiringError) {
  Trio t(CrossMode::NoExchange, 2);
  Tape<double> tape;
  std::vector<WireInput<double>> in(2);
  for (std::size_t i = 0; i < 2; ++i) {
    in[i].x = tape.constant(random_matrix(3, 4, 60 + i));
    in[i].params = &t.layers[i];
    in[i].layer = i;
  }
  EXPECT_THROW(wire_step<double>(in, CrossMode::NoExchange), WiringError);
}

TEST(WireStep, CrossNeedsTwoEncoders) {
  Trio t(CrossMode::NoExchange, 1);
  Tape<double> tape;
  std::vector<WireInput<double>> in(1);
  in[0].x = tape.constant(random_matrix(3, 4, 70));
  in[0].params = &t.layers[0];
  EXPECT_THROW(wire_step<double>(in, CrossMode::Attention), WiringError);
}

TEST(WireStep, AllModesPreserveShape) {
  for (CrossMode mode : kCrossModes) {
    Trio t(mode, 3);
    Tape<double> tape;
    std::vector<WireInput<double>> in(3);
    for (std::size_t i = 0; i < 3; ++i) {
      in[i].x = tape.constant(random_matrix(6, 4, 80 + i));
      in[i].params = &t.layers[i];
    }
    for (const auto& o : wire_step<double>(in, mode)) {
      EXPECT_EQ(o.y.rows(), 6u);
      EXPECT_EQ(o.y.cols(), 4u);
    }
  }
}

}  // namespace
}  // namespace mcdre
