#pragma once

// Mentions and the BIO / BIOHD tag schemes.
//
// BIOHD adds two segment kinds to BIO:
//   HB/HI  a fragment shared by two or more mentions of the same label
//   DB/DI  a fragment of one discontinuous mention, not shared
//
// Decoding per label: each D segment joins its nearest H segment (ties go to
// the following H). Without any H of the label, D segments pair up in order
// and a leftover D becomes flat. An H with no D partner becomes flat.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcdre/error.hpp"

namespace mcdre {

/// Half-open token range.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  friend auto operator<=>(const Span&, const Span&) = default;
  bool overlaps(const Span& o) const noexcept { return start < o.end && o.start < end; }
};

struct Mention {
  std::string label;
  std::vector<Span> fragments;

  bool discontinuous() const noexcept { return fragments.size() > 1; }
  std::size_t first_token() const { return fragments.front().start; }

  std::set<std::size_t> tokens() const {
    std::set<std::size_t> out;
    for (const auto& f : fragments)
      for (std::size_t t = f.start; t < f.end; ++t) out.insert(t);
    return out;
  }

  /// Fragments non-empty, sorted, non-overlapping, each non-empty.
  void validate() const {
    if (label.empty()) throw DataError("mention without a label");
    if (fragments.empty()) throw DataError("mention '" + label + "' has no fragments");
    for (std::size_t i = 0; i < fragments.size(); ++i) {
      if (fragments[i].start >= fragments[i].end) throw DataError("empty fragment in mention " + str());
      if (i > 0 && fragments[i].start < fragments[i - 1].end) {
        throw DataError("fragments unsorted or overlapping in mention " + str());
      }
    }
  }

  /// "ADE[0,2)+[4,5)"
  std::string str() const {
    std::string out = label;
    for (std::size_t i = 0; i < fragments.size(); ++i) {
      if (i > 0) out += '+';
      out += '[' + std::to_string(fragments[i].start) + ',' + std::to_string(fragments[i].end) + ')';
    }
    return out;
  }

  friend bool operator==(const Mention&, const Mention&) = default;
  friend auto operator<=>(const Mention& a, const Mention& b) {
    if (auto c = a.fragments <=> b.fragments; c != 0) return c;
    return a.label <=> b.label;
  }
};

/// Canonical order: by fragments, then label.
inline std::vector<Mention> sorted(std::vector<Mention> ms) {
  std::sort(ms.begin(), ms.end());
  return ms;
}

enum class Scheme { BIO, BIOHD };

inline std::string_view scheme_name(Scheme s) { return s == Scheme::BIO ? "bio" : "biohd"; }

inline Scheme parse_scheme(std::string_view s) {
  if (s == "bio" || s == "BIO") return Scheme::BIO;
  if (s == "biohd" || s == "BIOHD") return Scheme::BIOHD;
  throw ConfigError("unknown tag scheme '" + std::string(s) + "' (expected bio or biohd)");
}

enum class Prefix { O, B, I, DB, DI, HB, HI };

struct Tag {
  Prefix prefix = Prefix::O;
  std::string label;

  friend bool operator==(const Tag&, const Tag&) = default;
};

inline std::string_view prefix_name(Prefix p) {
  switch (p) {
    case Prefix::O: return "O";
    case Prefix::B: return "B";
    case Prefix::I: return "I";
    case Prefix::DB: return "DB";
    case Prefix::DI: return "DI";
    case Prefix::HB: return "HB";
    case Prefix::HI: return "HI";
  }
  return "?";
}

inline std::string tag_string(const Tag& t) {
  if (t.prefix == Prefix::O) return "O";
  return std::string(prefix_name(t.prefix)) + "-" + t.label;
}

/// Parses "O" or "P-label"; P must belong to the scheme.
inline std::optional<Tag> try_parse_tag(std::string_view s, Scheme scheme) {
  if (s == "O") return Tag{};
  const auto dash = s.find('-');
  if (dash == std::string_view::npos || dash + 1 >= s.size()) return std::nullopt;
  const auto p = s.substr(0, dash);
  Tag t;
  t.label = std::string(s.substr(dash + 1));
  if (p == "B") t.prefix = Prefix::B;
  else if (p == "I") t.prefix = Prefix::I;
  else if (scheme == Scheme::BIOHD && p == "DB") t.prefix = Prefix::DB;
  else if (scheme == Scheme::BIOHD && p == "DI") t.prefix = Prefix::DI;
  else if (scheme == Scheme::BIOHD && p == "HB") t.prefix = Prefix::HB;
  else if (scheme == Scheme::BIOHD && p == "HI") t.prefix = Prefix::HI;
  else return std::nullopt;
  return t;
}

inline Tag parse_tag(std::string_view s, Scheme scheme) {
  auto t = try_parse_tag(s, scheme);
  if (!t) throw DataError("tag '" + std::string(s) + "' is not valid under " + std::string(scheme_name(scheme)));
  return *t;
}

namespace detail {

enum class SegKind { Flat, Disc, Shared };

struct Segment {
  SegKind kind;
  std::string label;
  Span span;
};

inline SegKind kind_of(Prefix p) {
  switch (p) {
    case Prefix::DB:
    case Prefix::DI: return SegKind::Disc;
    case Prefix::HB:
    case Prefix::HI: return SegKind::Shared;
    default: return SegKind::Flat;
  }
}

inline bool is_inside(Prefix p) { return p == Prefix::I || p == Prefix::DI || p == Prefix::HI; }

/// Maximal runs. An inside tag that does not continue a run of the same kind
/// and label opens a new one.
inline std::vector<Segment> segments(const std::vector<Tag>& tags) {
  std::vector<Segment> out;
  std::optional<Segment> cur;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const Tag& t = tags[i];
    if (t.prefix == Prefix::O) {
      if (cur) out.push_back(*cur);
      cur.reset();
      continue;
    }
    const SegKind k = kind_of(t.prefix);
    if (is_inside(t.prefix) && cur && cur->kind == k && cur->label == t.label) {
      cur->span.end = i + 1;
      continue;
    }
    if (cur) out.push_back(*cur);
    cur = Segment{k, t.label, {i, i + 1}};
  }
  if (cur) out.push_back(*cur);
  return out;
}

inline std::size_t gap(const Span& a, const Span& b) {
  if (a.end <= b.start) return b.start - a.end;
  if (b.end <= a.start) return a.start - b.end;
  return 0;
}

inline std::vector<Tag> parse_all(const std::vector<std::string>& tags, Scheme scheme) {
  std::vector<Tag> out;
  out.reserve(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto t = try_parse_tag(tags[i], scheme);
    if (!t) {
      throw DataError("tag '" + tags[i] + "' at position " + std::to_string(i) + " is not valid under " +
                      std::string(scheme_name(scheme)));
    }
    out.push_back(*t);
  }
  return out;
}

inline std::string list(const std::vector<const Mention*>& ms) {
  std::string s;
  for (const auto* m : ms) s += (s.empty() ? "" : ", ") + m->str();
  return s;
}

inline void check_range(const std::vector<Mention>& mentions, std::size_t length) {
  for (const auto& m : mentions) {
    m.validate();
    if (m.fragments.back().end > length) {
      throw DataError("mention " + m.str() + " exceeds sentence length " + std::to_string(length));
    }
  }
}

}  // namespace detail

/// Decode of parsed tags; total on any sequence.
inline std::vector<Mention> decode_tags(const std::vector<Tag>& tags) {
  using detail::SegKind;
  const auto segs = detail::segments(tags);
  std::vector<Mention> out;
  std::map<std::string, std::vector<Span>> disc, shared;
  for (const auto& s : segs) {
    if (s.kind == SegKind::Flat) out.push_back({s.label, {s.span}});
    else if (s.kind == SegKind::Disc) disc[s.label].push_back(s.span);
    else shared[s.label].push_back(s.span);
  }
  std::set<std::pair<std::string, Span>> paired;
  for (auto& [label, ds] : disc) {
    const auto it = shared.find(label);
    if (it == shared.end()) {
      std::size_t i = 0;
      for (; i + 1 < ds.size(); i += 2) out.push_back({label, {ds[i], ds[i + 1]}});
      if (i < ds.size()) out.push_back({label, {ds[i]}});
      continue;
    }
    for (const auto& d : ds) {
      const Span* best = nullptr;
      for (const auto& h : it->second) {
        if (best == nullptr) {
          best = &h;
          continue;
        }
        const auto gh = detail::gap(d, h), gb = detail::gap(d, *best);
        if (gh < gb || (gh == gb && h.start > d.start)) best = &h;
      }
      paired.insert({label, *best});
      std::vector<Span> frags{d, *best};
      std::sort(frags.begin(), frags.end());
      out.push_back({label, frags});
    }
  }
  for (const auto& [label, hs] : shared)
    for (const auto& h : hs)
      if (!paired.contains({label, h})) out.push_back({label, {h}});
  std::sort(out.begin(), out.end());
  return out;
}

/// Maximal B(I)* runs; an orphan I starts a new mention.
inline std::vector<Mention> decode_bio(const std::vector<std::string>& tags) {
  auto parsed = detail::parse_all(tags, Scheme::BIO);
  return decode_tags(parsed);
}

inline std::vector<Mention> decode_biohd(const std::vector<std::string>& tags) {
  return decode_tags(detail::parse_all(tags, Scheme::BIOHD));
}

inline std::vector<Mention> decode(const std::vector<std::string>& tags, Scheme scheme) {
  return scheme == Scheme::BIO ? decode_bio(tags) : decode_biohd(tags);
}

inline std::vector<std::string> encode_bio(const std::vector<Mention>& mentions, std::size_t length) {
  detail::check_range(mentions, length);
  std::vector<std::string> tags(length, "O");
  std::vector<const Mention*> owner(length, nullptr);
  for (const auto& m : mentions) {
    if (m.discontinuous()) throw SchemeCapacityError("BIO cannot represent discontinuous mention " + m.str());
    const Span f = m.fragments[0];
    for (std::size_t t = f.start; t < f.end; ++t) {
      if (owner[t] != nullptr) {
        throw SchemeCapacityError("BIO cannot represent overlapping mentions " + owner[t]->str() + " and " + m.str());
      }
      owner[t] = &m;
      tags[t] = (t == f.start ? "B-" : "I-") + m.label;
    }
  }
  return tags;
}

inline std::vector<std::string> encode_biohd(const std::vector<Mention>& mentions, std::size_t length) {
  detail::check_range(mentions, length);
  {
    auto s = sorted(mentions);
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] == s[i - 1]) throw SchemeCapacityError("duplicate mention " + s[i].str());
  }
  std::map<std::pair<std::string, Span>, std::vector<const Mention*>> users;
  for (const auto& m : mentions)
    for (const auto& f : m.fragments) users[{m.label, f}].push_back(&m);

  struct Assigned {
    Span span;
    std::string label;
    Prefix begin, inside;
    std::vector<const Mention*> by;
  };
  std::vector<Assigned> segs;
  for (const auto& [key, by] : users) {
    const auto& [label, span] = key;
    Prefix b = Prefix::B, i = Prefix::I;
    if (by.size() >= 2) {
      b = Prefix::HB;
      i = Prefix::HI;
    } else if (by[0]->discontinuous()) {
      b = Prefix::DB;
      i = Prefix::DI;
    }
    segs.push_back({span, label, b, i, by});
  }
  std::vector<std::string> tags(length, "O");
  std::vector<const Assigned*> owner(length, nullptr);
  for (const auto& s : segs) {
    for (std::size_t t = s.span.start; t < s.span.end; ++t) {
      if (owner[t] != nullptr) {
        auto involved = owner[t]->by;
        involved.insert(involved.end(), s.by.begin(), s.by.end());
        throw SchemeCapacityError("BIOHD cannot represent token " + std::to_string(t) + " claimed by " +
                                  detail::list(involved));
      }
      owner[t] = &s;
      tags[t] = std::string(prefix_name(t == s.span.start ? s.begin : s.inside)) + "-" + s.label;
    }
  }
  if (decode_biohd(tags) != sorted(mentions)) {
    std::vector<const Mention*> all;
    for (const auto& m : mentions) all.push_back(&m);
    throw SchemeCapacityError("BIOHD pairing cannot reconstruct " + detail::list(all));
  }
  return tags;
}

inline std::vector<std::string> encode(const std::vector<Mention>& mentions, std::size_t length, Scheme scheme) {
  return scheme == Scheme::BIO ? encode_bio(mentions, length) : encode_biohd(mentions, length);
}

}  // namespace mcdre
