#pragma once

// Run configuration: a flat "key = value" text file. '#' starts a comment.
// Unknown keys are errors.

#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcdre/data.hpp"
#include "mcdre/error.hpp"
#include "mcdre/tags.hpp"
#include "mcdre/types.hpp"

namespace mcdre {

enum class EmbeddingKey { Surface, Occurrence };

struct RunConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 0;  // 0 means 2 * d_model
  double dropout = 0.5;
  double lr = 4e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  CrossMode cross_mode = CrossMode::KeyValue;
  AspectSet active_aspects = AspectSet::all();
  bool cross_last_only = false;
  bool include_own = false;
  Scheme scheme = Scheme::BIOHD;
  std::string embedding = "trainable";  // or external:PATH
  EmbeddingKey embedding_key = EmbeddingKey::Surface;
  bool positions = true;
  std::size_t patience = 10;
  std::size_t max_epochs = 300;
  std::array<double, 3> loss_weights{1.0, 1.0, 1.0};
  double clip_norm = 10.0;
  // Optional fixed label vocabularies; empty means built from training data.
  std::vector<std::string> entity_labels, pos_labels, medner_labels;

  std::size_t ffn_width() const { return d_ff == 0 ? 2 * d_model : d_ff; }
  bool external_embedding() const { return embedding.starts_with("external:"); }
  std::string embedding_path() const { return external_embedding() ? embedding.substr(9) : std::string(); }

  void validate() const {
    if (d_model == 0 || n_heads == 0 || n_layers == 0) throw ConfigError("d_model, n_heads and n_layers must be positive");
    if (d_model % n_heads != 0) {
      throw ConfigError("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" + std::to_string(d_model) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!active_aspects.contains(Aspect::Semantic)) throw ConfigError("active_aspects must contain se");
    if (embedding != "trainable" && !external_embedding()) {
      throw ConfigError("embedding must be 'trainable' or 'external:PATH'");
    }
    if (external_embedding() && embedding_path().empty()) throw ConfigError("embedding external: path is empty");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    for (double w : loss_weights)
      if (!(w >= 0.0)) throw ConfigError("loss_weights must be non-negative");
  }

  std::string to_text() const;
};

namespace detail {

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

// shortest text that reads back to the same double
inline std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline bool parse_bool(std::string_view v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

inline std::vector<std::string> parse_list(std::string_view v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  for (auto item : split(v, ',')) out.emplace_back(trim(item));
  return out;
}

}  // namespace detail

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "d_model = " << d_model << '\n'
     << "n_heads = " << n_heads << '\n'
     << "n_layers = " << n_layers << '\n'
     << "d_ff = " << ffn_width() << '\n'
     << "dropout = " << detail::num(dropout) << '\n'
     << "lr = " << detail::num(lr) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "seed = " << seed << '\n'
     << "cross_mode = " << cross_mode_name(cross_mode) << '\n'
     << "active_aspects = " << active_aspects.str() << '\n'
     << "cross_layers = " << (cross_last_only ? "last" : "all") << '\n'
     << "include_own = " << (include_own ? "true" : "false") << '\n'
     << "scheme = " << scheme_name(scheme) << '\n'
     << "embedding = " << embedding << '\n'
     << "embedding_key = " << (embedding_key == EmbeddingKey::Surface ? "surface" : "occurrence") << '\n'
     << "positions = " << (positions ? "true" : "false") << '\n'
     << "patience = " << patience << '\n'
     << "max_epochs = " << max_epochs << '\n'
     << "loss_weights = " << detail::num(loss_weights[0]) << ',' << detail::num(loss_weights[1]) << ','
     << detail::num(loss_weights[2]) << '\n'
     << "clip_norm = " << detail::num(clip_norm) << '\n';
  if (!entity_labels.empty()) os << "entity_labels = " << detail::join(entity_labels) << '\n';
  if (!pos_labels.empty()) os << "pos_labels = " << detail::join(pos_labels) << '\n';
  if (!medner_labels.empty()) os << "medner_labels = " << detail::join(medner_labels) << '\n';
  return os.str();
}

/// Applies one key. Throws ConfigError with the key named on a bad value.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  const std::string k(key);
  const std::string v(value);
  auto bad = [&]() -> ConfigError { return ConfigError("bad value '" + v + "' for " + k); };
  auto size = [&](std::size_t& out) {
    if (!detail::parse_int(value, out)) throw bad();
  };
  auto real = [&](double& out) {
    std::size_t used = 0;
    try {
      out = std::stod(v, &used);
    } catch (...) {
      throw bad();
    }
    if (used != v.size()) throw bad();
  };
  auto flag = [&](bool& out) {
    if (!detail::parse_bool(value, out)) throw bad();
  };
  if (k == "d_model") size(c.d_model);
  else if (k == "n_heads") size(c.n_heads);
  else if (k == "n_layers") size(c.n_layers);
  else if (k == "d_ff") size(c.d_ff);
  else if (k == "dropout") real(c.dropout);
  else if (k == "lr") real(c.lr);
  else if (k == "batch_size") size(c.batch_size);
  else if (k == "seed") {
    if (!detail::parse_int(value, c.seed)) throw bad();
  } else if (k == "cross_mode") c.cross_mode = parse_cross_mode(value);
  else if (k == "active_aspects") c.active_aspects = AspectSet::parse(value);
  else if (k == "cross_layers") {
    if (value == "all") c.cross_last_only = false;
    else if (value == "last") c.cross_last_only = true;
    else throw bad();
  } else if (k == "include_own") flag(c.include_own);
  else if (k == "scheme") c.scheme = parse_scheme(value);
  else if (k == "embedding") c.embedding = v;
  else if (k == "embedding_key") {
    if (value == "surface") c.embedding_key = EmbeddingKey::Surface;
    else if (value == "occurrence") c.embedding_key = EmbeddingKey::Occurrence;
    else throw bad();
  } else if (k == "positions") flag(c.positions);
  else if (k == "patience") size(c.patience);
  else if (k == "max_epochs") size(c.max_epochs);
  else if (k == "loss_weights") {
    const auto parts = detail::parse_list(value);
    if (parts.size() != 3) throw bad();
    for (std::size_t i = 0; i < 3; ++i) {
      std::size_t used = 0;
      try {
        c.loss_weights[i] = std::stod(parts[i], &used);
      } catch (...) {
        throw bad();
      }
      if (used != parts[i].size()) throw bad();
    }
  } else if (k == "clip_norm") real(c.clip_norm);
  else if (k == "entity_labels") c.entity_labels = detail::parse_list(value);
  else if (k == "pos_labels") c.pos_labels = detail::parse_list(value);
  else if (k == "medner_labels") c.medner_labels = detail::parse_list(value);
  else throw ConfigError("unknown config key '" + k + "'");
}

inline RunConfig parse_config(std::istream& in, const std::string& name) {
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    const auto hash = line.find('#');
    const auto body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(c, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

inline RunConfig parse_config_text(const std::string& text, const std::string& name = "<config>") {
  std::istringstream in(text);
  return parse_config(in, name);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.string());
}

}  // namespace mcdre
