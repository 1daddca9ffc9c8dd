#pragma once

// Text formats.
//
// Columnar corpus, one token per line, blank line between sentences:
//   SURFACE<TAB>POS<TAB>MEDNER<TAB>ENTITY
// Lines starting with '#' are comments; "# id = X" names the next sentence.
// POS and MEDNER may be "_" when the aspect is not annotated.
//
// Embeddings: a header "N D", then N lines of a token followed by D floats.
//
// Mentions: docid<TAB>label<TAB>s1-e1[,s2-e2...] with half-open token ranges.

#include <cerrno>
#include <cmath>
#include <charconv>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcdre/error.hpp"
#include "mcdre/tags.hpp"
#include "mcdre/tensor.hpp"
#include "mcdre/types.hpp"

namespace mcdre {

inline constexpr std::string_view kMissing = "_";

struct SentenceRecord {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::string> pos;
  std::vector<std::string> medner;
  std::vector<std::string> entity;

  std::size_t size() const noexcept { return tokens.size(); }

  const std::vector<std::string>& column(Aspect a) const {
    switch (a) {
      case Aspect::Semantic: return entity;
      case Aspect::Syntactic: return pos;
      case Aspect::Domain: return medner;
    }
    return entity;
  }

  /// A column counts as present when none of its cells is "_".
  bool has_column(Aspect a) const {
    for (const auto& t : column(a))
      if (t == kMissing) return false;
    return true;
  }

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

using Dataset = std::vector<SentenceRecord>;

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

inline bool parse_float(std::string_view s, float& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace detail

/// Writes through a temporary sibling and renames it into place, so a failed
/// write never leaves a partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    try {
      body(out);
    } catch (...) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw;
    }
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, [&](std::ostream& os) { os << text; });
}

inline Dataset read_columnar(std::istream& in, const std::string& name, Scheme scheme) {
  Dataset out;
  SentenceRecord cur;
  std::string pending_id;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    cur.id = pending_id.empty() ? "s" + std::to_string(out.size()) : pending_id;
    pending_id.clear();
    out.push_back(std::move(cur));
    cur = SentenceRecord{};
  };
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (detail::trim(line).empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      const auto body = detail::trim(std::string_view(line).substr(1));
      if (body.starts_with("id") ) {
        const auto eq = body.find('=');
        if (eq != std::string_view::npos && detail::trim(body.substr(0, eq)) == "id") {
          if (!cur.tokens.empty()) throw ParseError(name, lineno, "sentence id inside a sentence");
          pending_id = std::string(detail::trim(body.substr(eq + 1)));
        }
      }
      continue;
    }
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 4) {
      throw ParseError(name, lineno, "expected 4 tab-separated columns, found " + std::to_string(cols.size()));
    }
    for (std::size_t c = 0; c < 4; ++c)
      if (cols[c].empty()) throw ParseError(name, lineno, "empty column " + std::to_string(c + 1));
    if (!try_parse_tag(cols[3], scheme)) {
      throw ParseError(name, lineno,
                       "entity tag '" + std::string(cols[3]) + "' is not valid under " + std::string(scheme_name(scheme)));
    }
    cur.tokens.emplace_back(cols[0]);
    cur.pos.emplace_back(cols[1]);
    cur.medner.emplace_back(cols[2]);
    cur.entity.emplace_back(cols[3]);
  }
  flush();
  return out;
}

inline Dataset load_columnar(const std::filesystem::path& path, Scheme scheme) {
  auto in = detail::open_in(path);
  return read_columnar(in, path.string(), scheme);
}

inline void write_columnar(std::ostream& os, const Dataset& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    if (i > 0) os << '\n';
    os << "# id = " << r.id << '\n';
    for (std::size_t t = 0; t < r.size(); ++t)
      os << r.tokens[t] << '\t' << r.pos[t] << '\t' << r.medner[t] << '\t' << r.entity[t] << '\n';
  }
}

inline void save_columnar(const std::filesystem::path& path, const Dataset& data) {
  write_file_atomic(path, [&](std::ostream& os) { write_columnar(os, data); });
}

/// Occurrence key "<sentence id>:<token index>"; with ids of the form
/// docid:sent this gives docid:sent:idx.
inline std::string occurrence_key(const SentenceRecord& r, std::size_t token) {
  return r.id + ":" + std::to_string(token);
}

struct EmbeddingFile {
  std::vector<std::string> tokens;
  Matrix<float> vectors;
};

inline EmbeddingFile read_embeddings(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (!detail::trim(line).empty()) break;
  }
  const auto head = detail::split_ws(line);
  std::size_t n = 0, d = 0;
  if (head.size() != 2 || !detail::parse_int(head[0], n) || !detail::parse_int(head[1], d) || d == 0) {
    throw ParseError(name, lineno == 0 ? 1 : lineno, "expected header 'N D'");
  }
  EmbeddingFile out;
  out.vectors = Matrix<float>(n, d);
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (detail::trim(line).empty()) continue;
    if (row == n) throw ParseError(name, lineno, "more than the " + std::to_string(n) + " vectors in the header");
    const auto f = detail::split_ws(line);
    if (f.size() != d + 1) {
      throw ParseError(name, lineno, "expected a token and " + std::to_string(d) + " values, found " +
                                         std::to_string(f.size()) + " fields");
    }
    if (!seen.emplace(std::string(f[0]), row).second) {
      throw ParseError(name, lineno, "duplicate token '" + std::string(f[0]) + "'");
    }
    out.tokens.emplace_back(f[0]);
    for (std::size_t j = 0; j < d; ++j) {
      float v = 0;
      if (!detail::parse_float(f[j + 1], v) || !std::isfinite(v)) {
        throw ParseError(name, lineno, "non-numeric value '" + std::string(f[j + 1]) + "'");
      }
      out.vectors(row, j) = v;
    }
    ++row;
  }
  if (row != n) {
    throw ParseError(name, lineno, "header announces " + std::to_string(n) + " vectors, file has " + std::to_string(row));
  }
  return out;
}

inline EmbeddingFile load_embeddings(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_embeddings(in, path.string());
}

inline void write_embeddings(std::ostream& os, const EmbeddingFile& e) {
  os << e.vectors.rows() << ' ' << e.vectors.cols() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < e.vectors.rows(); ++i) {
    os << e.tokens[i];
    for (std::size_t j = 0; j < e.vectors.cols(); ++j) {
      std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(e.vectors(i, j)));
      os << buf;
    }
    os << '\n';
  }
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingFile& e) {
  write_file_atomic(path, [&](std::ostream& os) { write_embeddings(os, e); });
}

struct MentionLine {
  std::string doc;
  Mention mention;

  friend bool operator==(const MentionLine&, const MentionLine&) = default;
};

inline std::string format_mention_line(const std::string& doc, const Mention& m) {
  std::string s = doc + "\t" + m.label + "\t";
  for (std::size_t i = 0; i < m.fragments.size(); ++i) {
    if (i > 0) s += ',';
    s += std::to_string(m.fragments[i].start) + "-" + std::to_string(m.fragments[i].end);
  }
  return s;
}

inline std::vector<MentionLine> read_mention_lines(std::istream& in, const std::string& name) {
  std::vector<MentionLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (detail::trim(line).empty() || line[0] == '#') continue;
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty()) {
      throw ParseError(name, lineno, "expected docid<TAB>label<TAB>ranges");
    }
    MentionLine ml{std::string(cols[0]), {std::string(cols[1]), {}}};
    for (auto r : detail::split(cols[2], ',')) {
      const auto dash = r.find('-');
      Span s;
      if (dash == std::string_view::npos || !detail::parse_int(r.substr(0, dash), s.start) ||
          !detail::parse_int(r.substr(dash + 1), s.end)) {
        throw ParseError(name, lineno, "bad range '" + std::string(r) + "' (expected start-end)");
      }
      ml.mention.fragments.push_back(s);
    }
    try {
      ml.mention.validate();
    } catch (const DataError& e) {
      throw ParseError(name, lineno, e.what());
    }
    out.push_back(std::move(ml));
  }
  return out;
}

inline std::vector<MentionLine> load_mention_lines(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_mention_lines(in, path.string());
}

/// String-to-id table in insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> items) {
    for (auto& s : items) add(s);
  }

  int add(const std::string& s) {
    auto [it, inserted] = index_.emplace(s, static_cast<int>(items_.size()));
    if (inserted) items_.push_back(s);
    return it->second;
  }

  std::optional<int> find(const std::string& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& at(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= items_.size()) {
      throw DataError("id " + std::to_string(id) + " outside vocabulary of " + std::to_string(items_.size()));
    }
    return items_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const std::vector<std::string>& items() const noexcept { return items_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.items_ == b.items_; }

 private:
  std::vector<std::string> items_;
  std::unordered_map<std::string, int> index_;
};

/// Gold mentions of every record under the scheme.
inline std::vector<std::vector<Mention>> gold_mentions(const Dataset& data, Scheme scheme) {
  std::vector<std::vector<Mention>> out;
  out.reserve(data.size());
  for (const auto& r : data) out.push_back(decode(r.entity, scheme));
  return out;
}

}  // namespace mcdre
