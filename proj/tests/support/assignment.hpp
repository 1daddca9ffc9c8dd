#pragma once

// Exhaustive maximum one-to-one matching, the reference for the greedy scorer.

#include <cstddef>
#include <vector>

#include "mcdre/metrics.hpp"
#include "mcdre/rng.hpp"

namespace mcdre::testing {

namespace detail {

inline std::size_t best_from(const std::vector<Mention>& gold, const std::vector<Mention>& pred, MatchMode mode,
                             std::size_t g, std::vector<bool>& used) {
  if (g == gold.size()) return 0;
  std::size_t best = best_from(gold, pred, mode, g + 1, used);  // leave gold g unmatched
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (used[j] || !matches(gold[g], pred[j], mode)) continue;
    used[j] = true;
    best = std::max(best, 1 + best_from(gold, pred, mode, g + 1, used));
    used[j] = false;
  }
  return best;
}

}  // namespace detail

/// Largest number of matched pairs over all one-to-one assignments.
inline std::size_t optimal_tp(const std::vector<Mention>& gold, const std::vector<Mention>& pred, MatchMode mode) {
  std::vector<bool> used(pred.size(), false);
  return detail::best_from(gold, pred, mode, 0, used);
}

inline Counts optimal_counts(const MentionCorpus& gold, const MentionCorpus& pred, MatchMode mode) {
  Counts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto tp = optimal_tp(gold[i], pred[i], mode);
    c.tp += tp;
    c.fn += gold[i].size() - tp;
    c.fp += pred[i].size() - tp;
  }
  return c;
}

/// Random mention with 1 or 2 fragments inside [0, length).
inline Mention random_mention(Rng& rng, std::size_t length, const std::vector<std::string>& labels) {
  Mention m;
  m.label = labels[rng.below(labels.size())];
  const std::size_t s = rng.below(length - 1);
  const std::size_t e = s + 1 + rng.below(std::min<std::size_t>(3, length - s - 1) + 1);
  m.fragments.push_back({s, std::min(e, length)});
  if (rng.bernoulli(0.25) && m.fragments[0].end + 1 < length) {
    const std::size_t s2 = m.fragments[0].end + 1 + rng.below(length - m.fragments[0].end - 1);
    m.fragments.push_back({s2, s2 + 1});
  }
  return m;
}

/// Random corpus of up to 5 sentences with up to 6 mentions each. Predictions
/// are copies of gold mentions, shifted copies, or fresh random mentions.
inline std::pair<MentionCorpus, MentionCorpus> random_corpus(Rng& rng) {
  static const std::vector<std::string> labels{"ADE", "Drug", "Reason"};
  const std::size_t n = 1 + rng.below(5);
  MentionCorpus gold(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 8 + rng.below(10);
    const std::size_t ng = rng.below(7);
    for (std::size_t k = 0; k < ng; ++k) gold[i].push_back(random_mention(rng, len, labels));
    const std::size_t np = rng.below(7);
    for (std::size_t k = 0; k < np; ++k) {
      const auto r = rng.below(3);
      if (r == 0 && !gold[i].empty()) {
        pred[i].push_back(gold[i][rng.below(gold[i].size())]);
      } else if (r == 1 && !gold[i].empty()) {
        Mention m = gold[i][rng.below(gold[i].size())];
        auto& f = m.fragments.back();
        if (f.end < len) ++f.end;
        pred[i].push_back(m);
      } else {
        pred[i].push_back(random_mention(rng, len, labels));
      }
    }
  }
  return {gold, pred};
}

}  // namespace mcdre::testing
