// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [name...]   run only the named criteria

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "assignment.hpp"
#include "generators.hpp"
#include "gradcheck.hpp"
#include "mcdre/checkpoint.hpp"
#include "mcdre/model.hpp"
#include "mcdre/sweep.hpp"
#include "mcdre/synth.hpp"
#include "mcdre/trainer.hpp"

using namespace mcdre;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[2048];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- model fixtures

ModelConfig tiny_model(CrossMode mode) {
  ModelConfig c;
  c.shape = {8, 2, 16};
  c.n_layers = 2;
  c.dropout = 0.0;
  c.mode = mode;
  c.vocab_size = 10;
  c.label_counts = {5, 6, 4};
  c.seed = 31;
  return c;
}

template <class T>
void jitter(ParamStore<T>& ps, std::uint64_t seed, double amount) {
  Rng rng(seed);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (auto& v : ps[i].value.values()) v = static_cast<T>(v + rng.uniform(-amount, amount));
}

Outcome gradient_soundness() {
  const auto t0 = Clock::now();
  const std::vector<int> ids{2, 7, 5};
  const std::vector<int> gse{1, 4, 0}, gsy{5, 2, 3}, gdo{0, 3, 1};
  const GoldColumns gold{gse, gsy, gdo};
  double worst_elem = 0.0, worst_norm = 0.0;
  std::string where;
  std::size_t checked = 0;
  for (CrossMode mode : kCrossModes) {
    MultiAspectModel<double> m(tiny_model(mode));
    jitter(m.params(), 5, 0.2);
    m.params().zero_grad();
    {
      Tape<double> tape;
      tape.backward(joint_loss(m.forward(tape, ids, false), gold));
    }
    const auto r = testing::check_gradients(
        m.params(),
        [&] {
          Tape<double> tape;
          return joint_loss(m.forward(tape, ids, false), gold).value()(0, 0);
        },
        1e-5, 1e-6);
    checked += r.checked;
    worst_norm = std::max(worst_norm, r.norm_rel_error);
    if (r.max_rel_error >= worst_elem) {
      worst_elem = r.max_rel_error;
      where = std::string(cross_mode_name(mode)) + " " + r.worst;
    }
  }
  const double secs = seconds_since(t0);
  return {worst_elem <= 1e-2 && worst_norm <= 1e-3 && secs < 60.0,
          fmt("4 modes, %zu scalars: max element rel err %.2e (%s), max norm rel err %.2e, %.1fs", checked, worst_elem,
              where.c_str(), worst_norm, secs)};
}

Outcome head_normalization() {
  Rng rng(77);
  double worst = 0.0;
  std::size_t rows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const CrossMode mode = kCrossModes[static_cast<std::size_t>(trial) % 4];
    auto cfg = tiny_model(mode);
    cfg.seed = 1000 + static_cast<std::uint64_t>(trial);
    MultiAspectModel<float> m(cfg);
    jitter(m.params(), cfg.seed, 1.0);
    std::vector<int> ids(1 + rng.below(12));
    for (auto& id : ids) id = static_cast<int>(rng.below(cfg.vocab_size));
    for (const auto& p : m.distributions(ids)) {
      for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
        worst = std::max(worst, std::abs(s - 1.0));
        ++rows;
      }
    }
  }
  return {worst <= 1e-5, fmt("100 inputs, %zu rows over 3 heads: max |row sum - 1| = %.2e", rows, worst)};
}

Outcome cross_coupling() {
  const std::vector<int> ids{1, 4, 8, 3};
  const std::vector<int> gse{0, 2, 1, 4};
  auto se_loss = [&](const MultiAspectModel<double>& m) {
    Tape<double> tape;
    const auto r = m.forward(tape, ids, false);
    return task_loss_sums(r, GoldColumns{gse, std::vector<int>{0, 1, 2, 3}, std::vector<int>{0, 1, 2, 3}})[0]->value()(0, 0);
  };
  bool ok = true;
  std::string detail;
  for (CrossMode mode : kCrossModes) {
    auto cfg = tiny_model(mode);
    cfg.frozen_embeddings = true;
    MultiAspectModel<double> m(cfg);
    jitter(m.params(), 8, 0.2);
    const double before = se_loss(m);
    m.params().at("sy.layer0.ffn.W1").value(0, 0) += 0.05;
    const double delta = se_loss(m) - before;
    const bool good = mode == CrossMode::NoExchange ? delta == 0.0 : std::abs(delta) > 1e-12;
    ok = ok && good;
    detail += fmt("%s%s dse=%.3e", detail.empty() ? "" : ", ", std::string(cross_mode_name(mode)).c_str(), delta);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- codec and metrics

Outcome biohd_round_trip() {
  Rng rng(2024);
  int exact = 0, disc = 0, shared = 0;
  const int n = 1000;
  std::string first_bad;
  for (int i = 0; i < n; ++i) {
    const auto mc = testing::representable_mentions(rng);
    disc += mc.has_discontinuous;
    shared += mc.has_shared;
    try {
      if (decode_biohd(encode_biohd(mc.mentions, mc.length)) == sorted(mc.mentions)) {
        ++exact;
        continue;
      }
    } catch (const Error& e) {
      if (first_bad.empty()) first_bad = e.what();
    }
    if (first_bad.empty()) first_bad = "case " + std::to_string(i);
  }
  Rng fuzz(99);
  int decode_failures = 0;
  const int n_fuzz = 100000;
  for (int i = 0; i < n_fuzz; ++i) {
    const auto tags = testing::random_tags(fuzz, fuzz.below(20), Scheme::BIOHD);
    try {
      for (const auto& m : decode_biohd(tags)) {
        m.validate();
        if (m.fragments.back().end > tags.size()) ++decode_failures;
      }
    } catch (const Error&) {
      ++decode_failures;
    }
  }
  const bool ok = exact == n && disc >= 300 && shared >= 150 && decode_failures == 0;
  return {ok, fmt("%d/%d exact (%d discontinuous, %d shared)%s%s; fuzz %d sequences, %d decode failures", exact, n, disc,
                  shared, first_bad.empty() ? "" : ", first failure: ", first_bad.c_str(), n_fuzz, decode_failures)};
}

std::string corpus_str(const MentionCorpus& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) {
    s += "[";
    for (std::size_t k = 0; k < c[i].size(); ++k) s += (k ? " " : "") + c[i][k].str();
    s += "]";
  }
  return s;
}

Outcome metric_oracle(std::vector<std::string>& log) {
  Rng rng(4242);
  int agree = 0, unexplained = 0;
  for (int i = 0; i < 200; ++i) {
    const auto [gold, pred] = testing::random_corpus(rng);
    bool same = true;
    for (MatchMode mode : {MatchMode::Lenient, MatchMode::Strict}) {
      const Counts greedy = micro_f(gold, pred, mode).all.micro;
      const Counts best = testing::optimal_counts(gold, pred, mode);
      if (greedy == best) continue;
      same = false;
      // a greedy divergence can only lose matches; anything else is a bug
      const bool explained = greedy.tp < best.tp && greedy.tp + greedy.fp == best.tp + best.fp &&
                             greedy.tp + greedy.fn == best.tp + best.fn && mode == MatchMode::Lenient;
      unexplained += explained ? 0 : 1;
      log.push_back(fmt("corpus %d %s: greedy tp=%zu optimal tp=%zu (%s): gold %s pred %s", i,
                        std::string(match_mode_name(mode)).c_str(), greedy.tp, best.tp,
                        explained ? "first-come matching took a prediction a later gold needed" : "UNEXPLAINED",
                        corpus_str(gold).c_str(), corpus_str(pred).c_str()));
    }
    agree += same ? 1 : 0;
  }
  // hand cases
  auto m = [](std::string l, std::vector<Span> f) { return Mention{std::move(l), std::move(f)}; };
  const MentionCorpus g{{m("Drug", {{0, 1}}), m("Drug", {{3, 4}}), m("ADE", {{5, 7}})}};
  const MentionCorpus p{{m("Drug", {{0, 1}}), m("ADE", {{5, 6}})}};
  const auto strict = micro_f(g, p, MatchMode::Strict).all.micro;
  const auto lenient = micro_f(g, p, MatchMode::Lenient).all.micro;
  const bool hand = strict.precision() == 0.5 && strict.recall() == 1.0 / 3.0 && std::abs(strict.f() - 0.4) < 1e-15 &&
                    lenient.tp == 2 && lenient.fp == 0 && lenient.fn == 1;
  const MentionCorpus g2{{m("ADE", {{0, 2}}), m("ADE", {{1, 3}})}};
  const MentionCorpus p2{{m("ADE", {{1, 2}})}};
  const bool consumed = micro_f(g2, p2, MatchMode::Lenient).all.micro == Counts{1, 0, 1};
  return {agree >= 195 && unexplained == 0 && hand && consumed,
          fmt("%d/200 corpora equal the optimal assignment in both modes, %zu divergences logged (%d unexplained); "
              "hand case P=%.4f R=%.4f F=%.4f, consume-once %s",
              agree, log.size(), unexplained, strict.precision(), strict.recall(), strict.f(), consumed ? "ok" : "BROKEN")};
}

// ---------------------------------------------------------------- training criteria

RunConfig overfit_config(CrossMode mode) {
  RunConfig c;
  c.d_model = 32;
  c.n_heads = 4;
  c.n_layers = 2;
  c.dropout = 0.0;
  c.lr = 5e-3;
  c.batch_size = 8;
  c.max_epochs = 200;
  c.cross_mode = mode;
  c.seed = 1;
  return c;
}

Outcome overfit_smoke() {
  const auto t0 = Clock::now();
  const Dataset data = generate_synthetic({1, 50, 0}).train;
  bool ok = true;
  std::string detail;
  for (CrossMode mode : kCrossModes) {
    const auto c = overfit_config(mode);
    auto t = Tagger::create(c, build_vocabularies(c, data, nullptr), nullptr);
    double f = 0.0;
    const auto r = train_tagger(t, data, {}, [&](const EpochLog&) {
      f = t.evaluate(data, MatchMode::Strict).all.micro.f();
      return f < 0.99;
    });
    ok = ok && f >= 0.99;
    detail += fmt("%s%s F=%.4f at epoch %zu", detail.empty() ? "" : ", ", std::string(cross_mode_name(mode)).c_str(), f,
                  r.log.size());
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 300.0, detail + fmt(", %.1fs total", secs)};
}

Outcome no_exchange_equivalence() {
  const Dataset data = generate_synthetic({2, 40, 0}).train;
  RunConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.dropout = 0.2;
  c.lr = 3e-3;
  c.batch_size = 8;
  c.cross_mode = CrossMode::NoExchange;
  c.embedding = "external:in-memory";
  c.seed = 17;
  // frozen table over the training tokens; D = d_model so no trainable projection is shared
  EmbeddingFile e;
  {
    Vocabulary v;
    for (const auto& r : data)
      for (const auto& tok : r.tokens) v.add(tok);
    e.tokens = v.items();
    e.vectors = Matrix<float>(v.size(), c.d_model);
    Rng rng(5);
    for (auto& x : e.vectors.values()) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  auto joint_cfg = c;
  auto solo_cfg = c;
  solo_cfg.active_aspects = {Aspect::Semantic};
  auto joint = Tagger::create(joint_cfg, build_vocabularies(joint_cfg, data, &e), &e);
  auto solo = Tagger::create(solo_cfg, build_vocabularies(solo_cfg, data, &e), &e);

  const std::size_t steps_per_epoch = (data.size() + c.batch_size - 1) / c.batch_size;
  auto opts = TrainOptions::from(c);
  opts.max_epochs = 50 / steps_per_epoch;
  const auto rj = train<float>(*joint.model, encode_dataset(joint_cfg, joint.vocab, data), opts);
  const auto rs = train<float>(*solo.model, encode_dataset(solo_cfg, solo.vocab, data), opts);

  double worst = 0.0, moved = 0.0;
  std::size_t compared = 0;
  bool names_match = true;
  const auto& sp = solo.model->params();
  const auto& jp = joint.model->params();
  const auto fresh = Tagger::create(solo_cfg, build_vocabularies(solo_cfg, data, &e), &e);
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const auto* other = jp.find(sp[i].name);
    if (other == nullptr || !other->value.same_shape(sp[i].value)) {
      names_match = false;
      continue;
    }
    const auto* init = fresh.model->params().find(sp[i].name);
    for (std::size_t k = 0; k < sp[i].value.size(); ++k) {
      worst = std::max(worst, std::abs(double(sp[i].value.values()[k]) - double(other->value.values()[k])));
      moved = std::max(moved, std::abs(double(sp[i].value.values()[k]) - double(init->value.values()[k])));
      ++compared;
    }
  }
  const bool ok = names_match && rj.steps == rs.steps && rj.steps >= 50 && worst <= 1e-6 && moved > 1e-3;
  return {ok, fmt("%zu steps each, %zu semantic-side scalars: max |joint - standalone| = %.3e (max drift from init %.3f)",
                  rs.steps, compared, worst, moved)};
}

RunConfig ablation_config() {
  RunConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.dropout = 0.1;
  c.lr = 5e-3;
  c.batch_size = 16;
  c.patience = 10;
  c.max_epochs = 60;
  return c;
}

Outcome ablation_trend(std::vector<std::string>& log) {
  const auto t0 = Clock::now();
  const auto corpus = generate_synthetic({100, 400, 200});
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  auto progress = [&](const SweepCell& c, const SweepRun& r) {
    log.push_back(fmt("%s %s seed %llu: dev strict F %.4f (best epoch %zu)", std::string(cross_mode_name(c.mode)).c_str(),
                      c.aspects.str().c_str(), static_cast<unsigned long long>(r.seed), r.strict.all.micro.f(),
                      r.best_epoch));
  };
  const auto base = ablation_config();
  const auto se_only = run_sweep(base, {{CrossMode::KeyValue}, {{Aspect::Semantic}}, seeds}, corpus.train, corpus.dev,
                                 {}, nullptr, progress);
  const auto full = run_sweep(base, {{kCrossModes.begin(), kCrossModes.end()}, {AspectSet::all()}, seeds}, corpus.train,
                              corpus.dev, {}, nullptr, progress);
  const double se = 100.0 * se_only[0].mean_f(MatchMode::Strict);
  double none = 0.0;
  for (const auto& c : full)
    if (c.mode == CrossMode::NoExchange) none = 100.0 * c.mean_f(MatchMode::Strict);
  double worst_gain = 1e9, worst_cross = 1e9;
  std::string detail = fmt("se-only %.2f", se);
  for (const auto& c : full) {
    const double f = 100.0 * c.mean_f(MatchMode::Strict);
    worst_gain = std::min(worst_gain, f - se);
    if (c.mode != CrossMode::NoExchange) worst_cross = std::min(worst_cross, f - none);
    detail += fmt(", %s %.2f", std::string(cross_mode_name(c.mode)).c_str(), f);
  }
  return {worst_gain >= 2.0 && worst_cross >= -0.5,
          detail + fmt(" (worst three-aspect - se-only = %+.2f, need >= +2; worst cross - none = %+.2f, need >= -0.5); "
                       "%.0fs",
                       worst_gain, worst_cross, seconds_since(t0))};
}

std::string checkpoint_bytes(const Tagger& t) {
  std::ostringstream os;
  write_checkpoint(os, t.config, t.vocab, t.model->params());
  return os.str();
}

Outcome determinism_and_persistence() {
  const auto corpus = generate_synthetic({3, 60, 30});
  RunConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.dropout = 0.3;
  c.lr = 5e-3;
  c.batch_size = 8;
  c.max_epochs = 4;
  c.cross_mode = CrossMode::Attention;
  c.seed = 12;
  auto run = [&] {
    auto t = Tagger::create(c, build_vocabularies(c, corpus.train, nullptr), nullptr);
    train_tagger(t, corpus.train, corpus.dev);
    return t;
  };
  const auto a = run();
  const auto b = run();
  const std::string bytes_a = checkpoint_bytes(a);
  const bool same_runs = bytes_a == checkpoint_bytes(b);

  std::istringstream in(bytes_a);
  const auto restored = restore(read_checkpoint(in, "memory"));
  const bool round_trip = checkpoint_bytes(restored) == bytes_a;

  bool same_eval = format_tsv(restored.evaluate(corpus.dev, MatchMode::Strict)) ==
                       format_tsv(a.evaluate(corpus.dev, MatchMode::Strict)) &&
                   format_tsv(restored.evaluate(corpus.dev, MatchMode::Lenient)) ==
                       format_tsv(a.evaluate(corpus.dev, MatchMode::Lenient));
  std::size_t rows = 0;
  for (const auto& r : corpus.dev) {
    const auto ids = token_ids(c, a.vocab, r);
    const auto p = a.model->distributions(ids);
    const auto q = restored.model->distributions(ids);
    for (std::size_t k = 0; k < 3; ++k) {
      same_eval = same_eval && p[k] == q[k];
      rows += p[k].rows();
    }
  }
  return {same_runs && round_trip && same_eval,
          fmt("two same-seed runs %s (%zu bytes); save/load %s; reloaded eval over %zu distribution rows %s",
              same_runs ? "bit-identical" : "DIFFER", bytes_a.size(), round_trip ? "bit-exact" : "NOT bit-exact", rows,
              same_eval ? "bit-identical" : "DIFFERS")};
}

struct Criterion {
  std::string name;
  std::function<Outcome(std::vector<std::string>&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::set<std::string> only(argv + 1, argv + argc);
  const std::vector<Criterion> criteria{
      {"gradient-soundness", [](auto&) { return gradient_soundness(); }},
      {"head-normalization", [](auto&) { return head_normalization(); }},
      {"cross-coupling", [](auto&) { return cross_coupling(); }},
      {"biohd-round-trip", [](auto&) { return biohd_round_trip(); }},
      {"metric-oracle", metric_oracle},
      {"overfit-smoke", [](auto&) { return overfit_smoke(); }},
      {"no-exchange-equivalence", [](auto&) { return no_exchange_equivalence(); }},
      {"ablation-trend", ablation_trend},
      {"determinism-persistence", [](auto&) { return determinism_and_persistence(); }},
  };
  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.name)) continue;
    std::vector<std::string> log;
    Outcome o;
    try {
      o = c.run(log);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    for (const auto& line : log) std::printf("  # %s\n", line.c_str());
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
    ++ran;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
