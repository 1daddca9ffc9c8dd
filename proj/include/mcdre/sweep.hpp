#pragma once

// Grid of training runs over cross modes x aspect subsets x seeds.

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mcdre/checkpoint.hpp"
#include "mcdre/pipeline.hpp"
#include "mcdre/trainer.hpp"

namespace mcdre {

struct SweepRun {
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  ScoreReport strict, lenient;
};

struct SweepCell {
  CrossMode mode = CrossMode::KeyValue;
  AspectSet aspects;
  std::vector<SweepRun> runs;

  /// "cell_kv_se+sy.tsv"
  std::string file_name() const {
    std::string a = aspects.str();
    for (auto& ch : a)
      if (ch == ',') ch = '+';
    return "cell_" + std::string(cross_mode_name(mode)) + "_" + a + ".tsv";
  }

  double mean_f(MatchMode m) const {
    if (runs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : runs) s += (m == MatchMode::Strict ? r.strict : r.lenient).all.micro.f();
    return s / static_cast<double>(runs.size());
  }

  double sd_f(MatchMode m) const {
    if (runs.size() < 2) return 0.0;
    const double mu = mean_f(m);
    double s = 0.0;
    for (const auto& r : runs) {
      const double d = (m == MatchMode::Strict ? r.strict : r.lenient).all.micro.f() - mu;
      s += d * d;
    }
    return std::sqrt(s / static_cast<double>(runs.size() - 1));
  }
};

struct SweepGrid {
  std::vector<CrossMode> modes;
  std::vector<AspectSet> aspect_sets;
  std::vector<std::uint64_t> seeds;
};

using SweepProgress = std::function<void(const SweepCell&, const SweepRun&)>;

/// Trains one model per (mode, aspects, seed) from `base`, early-stopping on
/// `dev` and scoring on `test` (or `dev` when `test` is empty).
inline std::vector<SweepCell> run_sweep(const RunConfig& base, const SweepGrid& grid, const Dataset& train,
                                        const Dataset& dev, const Dataset& test, const EmbeddingFile* external,
                                        const SweepProgress& progress = {}) {
  if (grid.modes.empty() || grid.aspect_sets.empty() || grid.seeds.empty()) {
    throw ConfigError("sweep needs at least one mode, aspect set and seed");
  }
  const Dataset& scored = test.empty() ? dev : test;
  std::vector<SweepCell> cells;
  for (CrossMode mode : grid.modes) {
    for (const AspectSet& aspects : grid.aspect_sets) {
      SweepCell cell{mode, aspects, {}};
      for (auto seed : grid.seeds) {
        RunConfig c = base;
        c.cross_mode = mode;
        c.active_aspects = aspects;
        c.seed = seed;
        c.validate();
        auto t = Tagger::create(c, build_vocabularies(c, train, external), external);
        const auto r = train_tagger(t, train, dev);
        SweepRun run{seed, r.best_epoch, t.evaluate(scored, MatchMode::Strict), t.evaluate(scored, MatchMode::Lenient)};
        if (progress) progress(cell, run);
        cell.runs.push_back(std::move(run));
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

/// Per-cell report: one block of score lines per seed, then the means.
inline std::string format_cell(const SweepCell& c) {
  std::ostringstream os;
  os << "# cross_mode = " << cross_mode_name(c.mode) << "\n# aspects = " << c.aspects.str() << '\n';
  for (const auto& r : c.runs) {
    os << "# seed = " << r.seed << " best_epoch = " << r.best_epoch << '\n';
    os << format_tsv(r.strict) << format_tsv(r.lenient);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "# mean strict F = %.6f  lenient F = %.6f\n", c.mean_f(MatchMode::Strict),
                c.mean_f(MatchMode::Lenient));
  os << buf;
  return os.str();
}

/// One row per cell: mechanism, aspects, seeds, mean and sd of strict and
/// lenient micro-F in percent.
inline std::string format_summary(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "mechanism\taspects\tseeds\tstrict_F\tstrict_sd\tlenient_F\tlenient_sd\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%s\t%s\t%zu\t%.2f\t%.2f\t%.2f\t%.2f\n", std::string(cross_mode_title(c.mode)).c_str(),
                  c.aspects.str().c_str(), c.runs.size(), 100.0 * c.mean_f(MatchMode::Strict),
                  100.0 * c.sd_f(MatchMode::Strict), 100.0 * c.mean_f(MatchMode::Lenient),
                  100.0 * c.sd_f(MatchMode::Lenient));
    os << buf;
  }
  return os.str();
}

}  // namespace mcdre
