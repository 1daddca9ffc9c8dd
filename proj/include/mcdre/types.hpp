#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "mcdre/error.hpp"

namespace mcdre {

/// The three information views, each with its own encoder stack and head.
enum class Aspect : std::size_t { Semantic = 0, Syntactic = 1, Domain = 2 };

inline constexpr std::array<Aspect, 3> kAspects{Aspect::Semantic, Aspect::Syntactic, Aspect::Domain};

constexpr std::size_t index(Aspect a) noexcept { return static_cast<std::size_t>(a); }

constexpr std::string_view aspect_name(Aspect a) noexcept {
  switch (a) {
    case Aspect::Semantic: return "se";
    case Aspect::Syntactic: return "sy";
    case Aspect::Domain: return "do";
  }
  return "?";
}

inline Aspect parse_aspect(std::string_view s) {
  for (Aspect a : kAspects)
    if (aspect_name(a) == s) return a;
  throw ConfigError("unknown aspect '" + std::string(s) + "' (expected se, sy or do)");
}

/// Subset of aspects; the semantic aspect must always be present in a model.
class AspectSet {
 public:
  constexpr AspectSet() = default;
  constexpr AspectSet(std::initializer_list<Aspect> as) {
    for (Aspect a : as) bits_[index(a)] = true;
  }
  static constexpr AspectSet all() { return {Aspect::Semantic, Aspect::Syntactic, Aspect::Domain}; }

  constexpr bool contains(Aspect a) const noexcept { return bits_[index(a)]; }
  constexpr void insert(Aspect a) noexcept { bits_[index(a)] = true; }
  constexpr void erase(Aspect a) noexcept { bits_[index(a)] = false; }
  constexpr std::size_t size() const noexcept {
    return static_cast<std::size_t>(bits_[0]) + bits_[1] + bits_[2];
  }
  friend constexpr bool operator==(const AspectSet&, const AspectSet&) = default;

  /// "se,sy,do" style, canonical order.
  std::string str() const {
    std::string out;
    for (Aspect a : kAspects) {
      if (!contains(a)) continue;
      if (!out.empty()) out += ',';
      out += aspect_name(a);
    }
    return out;
  }

  static AspectSet parse(std::string_view s) {
    AspectSet set;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const std::size_t comma = s.find_first_of(",+", pos);
      auto item = s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
      while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
      if (!item.empty()) set.insert(parse_aspect(item));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return set;
  }

 private:
  std::array<bool, 3> bits_{};
};

/// How encoder stacks exchange state.
enum class CrossMode { NoExchange, KeyValue, Attention, FeedForward };

inline constexpr std::array<CrossMode, 4> kCrossModes{CrossMode::NoExchange, CrossMode::KeyValue,
                                                      CrossMode::Attention, CrossMode::FeedForward};

constexpr std::string_view cross_mode_name(CrossMode m) noexcept {
  switch (m) {
    case CrossMode::NoExchange: return "none";
    case CrossMode::KeyValue: return "kv";
    case CrossMode::Attention: return "attention";
    case CrossMode::FeedForward: return "feedforward";
  }
  return "?";
}

/// Row label used in sweep summaries.
constexpr std::string_view cross_mode_title(CrossMode m) noexcept {
  switch (m) {
    case CrossMode::NoExchange: return "no exchange";
    case CrossMode::KeyValue: return "key-value input cross";
    case CrossMode::Attention: return "attention cross";
    case CrossMode::FeedForward: return "feedforward cross";
  }
  return "?";
}

inline CrossMode parse_cross_mode(std::string_view s) {
  if (s == "none" || s == "no-exchange" || s == "noexchange") return CrossMode::NoExchange;
  if (s == "kv" || s == "key-value" || s == "keyvalue") return CrossMode::KeyValue;
  if (s == "attention" || s == "attn") return CrossMode::Attention;
  if (s == "feedforward" || s == "ffn") return CrossMode::FeedForward;
  throw ConfigError("unknown cross mode '" + std::string(s) + "' (expected none, kv, attention or feedforward)");
}

}  // namespace mcdre
