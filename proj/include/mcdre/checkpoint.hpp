#pragma once

// Binary checkpoint, all integers little-endian:
//   "MCDRE1"  u32 version
//   str config text
//   4 x (u32 count, count x str)   tokens, entity, POS, MEDNER vocabularies
//   u32 n_params, n_params x (str name, u32 rows, u32 cols, rows*cols f32)
// where str is a u32 byte length followed by the bytes.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "mcdre/config.hpp"
#include "mcdre/data.hpp"
#include "mcdre/pipeline.hpp"

namespace mcdre {

inline constexpr char kCheckpointMagic[6] = {'M', 'C', 'D', 'R', 'E', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  void bytes(char* out, std::size_t n) {
    in_.read(out, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError(name_ + ": truncated checkpoint");
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::string str() {
    const auto n = u32();
    if (n > (1u << 30)) throw DataError(name_ + ": implausible string length " + std::to_string(n));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  const std::string& name() const { return name_; }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace detail

struct NamedTensor {
  std::string name;
  Matrix<float> value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  RunConfig config;
  Vocabularies vocab;
  std::vector<NamedTensor> params;
};

inline void write_checkpoint(std::ostream& os, const RunConfig& config, const Vocabularies& vocab,
                             const ParamStore<float>& params) {
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_str(os, config.to_text());
  const std::array<const Vocabulary*, 4> vs{&vocab.tokens, &vocab.labels[0], &vocab.labels[1], &vocab.labels[2]};
  for (const auto* v : vs) {
    detail::put_u32(os, static_cast<std::uint32_t>(v->size()));
    for (const auto& s : v->items()) detail::put_str(os, s);
  }
  detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    detail::put_str(os, p.name);
    detail::put_u32(os, static_cast<std::uint32_t>(p.value.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(p.value.cols()));
    for (float v : p.value.values()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Tagger& t) {
  write_file_atomic(path, [&](std::ostream& os) { write_checkpoint(os, t.config, t.vocab, t.model->params()); });
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& name) {
  detail::Reader r(in, name);
  char magic[sizeof kCheckpointMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw DataError(name + ": not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError(name + ": checkpoint version " + std::to_string(version) + ", this build reads version " +
                    std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.config = parse_config_text(r.str(), name + " (embedded config)");
  std::array<Vocabulary*, 4> vs{&c.vocab.tokens, &c.vocab.labels[0], &c.vocab.labels[1], &c.vocab.labels[2]};
  for (auto* v : vs) {
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) v->add(r.str());
    if (v->size() != n) throw DataError(name + ": duplicate vocabulary entry");
  }
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    t.value = Matrix<float>(rows, cols);
    for (auto& v : t.value.values()) v = std::bit_cast<float>(r.u32());
    c.params.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(name + ": trailing bytes after checkpoint");
  return c;
}

inline Checkpoint load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in, path.string());
}

/// Rebuilds the tagger; every stored tensor must match a model parameter by
/// name and shape, and vice versa.
inline Tagger restore(const Checkpoint& c) {
  std::size_t embed_dim = c.config.d_model;
  for (const auto& p : c.params)
    if (p.name == "embedding.table") embed_dim = p.value.cols();
  Tagger t{c.config, c.vocab, nullptr};
  t.model = std::make_unique<MultiAspectModel<float>>(model_config(c.config, c.vocab, embed_dim));
  auto& store = t.model->params();
  if (store.size() != c.params.size()) {
    throw DataError("checkpoint holds " + std::to_string(c.params.size()) + " tensors, model expects " +
                    std::to_string(store.size()));
  }
  for (const auto& p : c.params) {
    auto* slot = store.find(p.name);
    if (slot == nullptr) throw DataError("checkpoint tensor '" + p.name + "' has no model parameter");
    if (!slot->value.same_shape(p.value)) {
      throw DataError("checkpoint tensor '" + p.name + "' is " + p.value.shape() + ", model expects " +
                      slot->value.shape());
    }
    slot->value = p.value;
  }
  return t;
}

inline Tagger load_checkpoint(const std::filesystem::path& path) { return restore(load_checkpoint_file(path)); }

}  // namespace mcdre
