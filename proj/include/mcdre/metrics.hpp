#pragma once

// Span-level micro precision / recall / F under lenient or strict matching.
// Matching is one-to-one and greedy per sentence: golds in document order,
// each consuming the first unconsumed matching prediction.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcdre/error.hpp"
#include "mcdre/tags.hpp"

namespace mcdre {

enum class MatchMode { Lenient, Strict };

inline std::string_view match_mode_name(MatchMode m) { return m == MatchMode::Lenient ? "lenient" : "strict"; }

inline MatchMode parse_match_mode(std::string_view s) {
  if (s == "lenient") return MatchMode::Lenient;
  if (s == "strict") return MatchMode::Strict;
  throw ConfigError("unknown match mode '" + std::string(s) + "' (expected lenient or strict)");
}

inline bool match_strict(const Mention& gold, const Mention& pred) {
  return gold.label == pred.label && gold.fragments == pred.fragments;
}

inline bool match_lenient(const Mention& gold, const Mention& pred) {
  if (gold.label != pred.label) return false;
  for (const auto& g : gold.fragments)
    for (const auto& p : pred.fragments)
      if (g.overlaps(p)) return true;
  return false;
}

inline bool matches(const Mention& gold, const Mention& pred, MatchMode mode) {
  return mode == MatchMode::Strict ? match_strict(gold, pred) : match_lenient(gold, pred);
}

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

struct Scores {
  Counts micro;
  std::map<std::string, Counts> per_label;

  void add(const Scores& o) {
    micro += o.micro;
    for (const auto& [l, c] : o.per_label) per_label[l] += c;
  }
};

/// One sentence's mentions per entry.
using MentionCorpus = std::vector<std::vector<Mention>>;

/// Greedy one-to-one matching of a single sentence. Both sides are taken in
/// document order; each gold consumes the first unconsumed matching prediction.
inline Scores score_sentence(std::vector<Mention> gold, std::vector<Mention> pred, MatchMode mode) {
  std::sort(gold.begin(), gold.end());
  std::sort(pred.begin(), pred.end());
  Scores s;
  std::vector<bool> used(pred.size(), false);
  for (const auto& g : gold) {
    bool hit = false;
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (used[j] || !matches(g, pred[j], mode)) continue;
      used[j] = true;
      hit = true;
      break;
    }
    if (hit) {
      ++s.micro.tp;
      ++s.per_label[g.label].tp;
    } else {
      ++s.micro.fn;
      ++s.per_label[g.label].fn;
    }
  }
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (used[j]) continue;
    ++s.micro.fp;
    ++s.per_label[pred[j].label].fp;
  }
  return s;
}

struct ScoreReport {
  MatchMode mode = MatchMode::Strict;
  Scores all;
  std::optional<Scores> discontinuous_sentences;  // sentences with a discontinuous gold mention
  std::optional<Scores> discontinuous_mentions;   // discontinuous gold and predicted mentions only
};

namespace detail {

inline void require_aligned(const MentionCorpus& gold, const MentionCorpus& pred) {
  if (gold.size() != pred.size()) {
    throw DataError("gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                    std::to_string(pred.size()));
  }
}

inline std::vector<Mention> discontinuous_only(const std::vector<Mention>& ms) {
  std::vector<Mention> out;
  for (const auto& m : ms)
    if (m.discontinuous()) out.push_back(m);
  return out;
}

}  // namespace detail

inline ScoreReport micro_f(const MentionCorpus& gold, const MentionCorpus& pred, MatchMode mode) {
  detail::require_aligned(gold, pred);
  ScoreReport r;
  r.mode = mode;
  for (std::size_t i = 0; i < gold.size(); ++i) r.all.add(score_sentence(gold[i], pred[i], mode));
  return r;
}

inline ScoreReport breakdown_report(const MentionCorpus& gold, const MentionCorpus& pred, MatchMode mode) {
  ScoreReport r = micro_f(gold, pred, mode);
  Scores sentences, mentions;
  bool any = false;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto gd = detail::discontinuous_only(gold[i]);
    if (gd.empty()) continue;
    any = true;
    sentences.add(score_sentence(gold[i], pred[i], mode));
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    mentions.add(score_sentence(detail::discontinuous_only(gold[i]), detail::discontinuous_only(pred[i]), mode));
  }
  if (any) {
    r.discontinuous_sentences = sentences;
    r.discontinuous_mentions = mentions;
  }
  return r;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void tsv_line(std::ostream& os, const std::string& label, MatchMode mode, const Counts& c) {
  os << label << '\t' << match_mode_name(mode) << '\t' << fmt(c.precision()) << '\t' << fmt(c.recall()) << '\t'
     << fmt(c.f()) << '\t' << c.tp << '\t' << c.fp << '\t' << c.fn << '\n';
}

inline void table_line(std::ostream& os, const std::string& label, const Counts& c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %7.2f %7.2f %7.2f %6zu %6zu %6zu\n", label.c_str(), 100 * c.precision(),
                100 * c.recall(), 100 * c.f(), c.tp, c.fp, c.fn);
  os << buf;
}

}  // namespace detail

/// One metric per line: label, mode, P, R, F, tp, fp, fn. The micro rows are
/// labelled "micro", subset rows "micro@disc-sentences" and "micro@disc-mentions".
inline std::string format_tsv(const ScoreReport& r) {
  std::ostringstream os;
  detail::tsv_line(os, "micro", r.mode, r.all.micro);
  for (const auto& [l, c] : r.all.per_label) detail::tsv_line(os, l, r.mode, c);
  if (r.discontinuous_sentences) detail::tsv_line(os, "micro@disc-sentences", r.mode, r.discontinuous_sentences->micro);
  if (r.discontinuous_mentions) detail::tsv_line(os, "micro@disc-mentions", r.mode, r.discontinuous_mentions->micro);
  return os.str();
}

inline std::string format_table(const ScoreReport& r) {
  std::ostringstream os;
  char head[160];
  std::snprintf(head, sizeof head, "%-28s %7s %7s %7s %6s %6s %6s\n", ("label (" + std::string(match_mode_name(r.mode)) + ")").c_str(),
                "P", "R", "F", "tp", "fp", "fn");
  os << head;
  for (const auto& [l, c] : r.all.per_label) detail::table_line(os, l, c);
  detail::table_line(os, "micro", r.all.micro);
  if (r.discontinuous_sentences) {
    detail::table_line(os, "sentences w/ discontinuous", r.discontinuous_sentences->micro);
    detail::table_line(os, "discontinuous mentions", r.discontinuous_mentions->micro);
  } else {
    os << "(no discontinuous gold mentions)\n";
  }
  return os.str();
}

}  // namespace mcdre
