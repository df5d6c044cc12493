#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fedldr/errors.hpp"
#include "fedldr/model.hpp"

namespace fedldr::gcn {

/// Number of doubles a full parameter payload occupies. Layout is the
/// blocks() order: adjacency embedding, pool embedding, then w/b per layer
/// (the shared model has just the per-layer pairs).
inline std::size_t payload_doubles(const Model& m) {
  std::size_t n = 0;
  for (const Tensor* b : blocks(m)) n += b->size();
  return n;
}

inline std::size_t payload_bytes(const Model& m) { return payload_doubles(m) * sizeof(double); }

/// Flattens all parameter blocks into one contiguous vector.
inline std::vector<double> pack(const Model& m) {
  std::vector<double> out;
  out.reserve(payload_doubles(m));
  for (const Tensor* b : blocks(m)) out.insert(out.end(), b->data().begin(), b->data().end());
  return out;
}

/// Inverse of pack(): fills the model's blocks from a flat vector. The model
/// supplies the shapes, so the payload length must match exactly.
inline void unpack(Model& m, const std::vector<double>& flat) {
  if (flat.size() != payload_doubles(m))
    throw ContractError("unpack: payload has " + std::to_string(flat.size()) +
                        " doubles, model needs " + std::to_string(payload_doubles(m)));
  std::size_t pos = 0;
  for (Tensor* b : blocks(m)) {
    std::copy(flat.begin() + pos, flat.begin() + pos + b->size(), b->data().begin());
    pos += b->size();
  }
}

namespace detail {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("checkpoint: truncated file");
  return v;
}

inline void put_arch(std::ostream& os, const Arch& a) {
  for (std::uint64_t v : {a.history, a.horizon, a.f_in, a.f_out, a.hidden, a.layers, a.embed_dim,
                          a.embed_dim_g})
    put(os, v);
}

inline Arch get_arch(std::istream& is) {
  Arch a;
  a.history = get<std::uint64_t>(is);
  a.horizon = get<std::uint64_t>(is);
  a.f_in = get<std::uint64_t>(is);
  a.f_out = get<std::uint64_t>(is);
  a.hidden = get<std::uint64_t>(is);
  a.layers = get<std::uint64_t>(is);
  a.embed_dim = get<std::uint64_t>(is);
  a.embed_dim_g = get<std::uint64_t>(is);
  return a;
}

}  // namespace detail

/// Writes a model checkpoint: magic "FLDC", format version, model kind
/// (0 = adaptive, 1 = shared), architecture, node count, then the payload.
inline void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("checkpoint: cannot open for write: " + path);
  os.write("FLDC", 4);
  detail::put<std::uint32_t>(os, 1);
  const bool shared = std::holds_alternative<SharedParams>(m);
  detail::put<std::uint32_t>(os, shared ? 1u : 0u);
  const Arch& arch = shared ? std::get<SharedParams>(m).arch : std::get<ModelParams>(m).arch;
  detail::put_arch(os, arch);
  const std::uint64_t nodes = shared ? 0 : std::get<ModelParams>(m).n_nodes();
  detail::put(os, nodes);
  const std::vector<double> flat = pack(m);
  detail::put<std::uint64_t>(os, flat.size());
  os.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw ParseError("checkpoint: write failed: " + path);
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FLDC", 4) != 0)
    throw ParseError("checkpoint: bad magic in " + path);
  const auto version = detail::get<std::uint32_t>(is);
  if (version != 1) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto kind = detail::get<std::uint32_t>(is);
  const Arch arch = detail::get_arch(is);
  const auto nodes = detail::get<std::uint64_t>(is);
  Model m = kind == 1 ? Model(SharedParams::init(arch, 0))
                      : Model(ModelParams::init(arch, nodes, 0));
  const auto count = detail::get<std::uint64_t>(is);
  std::vector<double> flat(count);
  is.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw ParseError("checkpoint: truncated payload in " + path);
  unpack(m, flat);
  return m;
}

}  // namespace fedldr::gcn
