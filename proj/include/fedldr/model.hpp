#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "fedldr/autodiff.hpp"
#include "fedldr/rng.hpp"
#include "fedldr/tensor.hpp"

namespace fedldr::gcn {

using num::GradTape;
using num::Tensor;
using num::Var;

/// Network architecture: history window T, forecast horizon, feature counts,
/// hidden width, layer count, and the two embedding dimensions (d for the
/// adjacency dictionary, d' for the parameter-pool embedding).
struct Arch {
  std::size_t history = 12;
  std::size_t horizon = 12;
  std::size_t f_in = 1;
  std::size_t f_out = 1;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  std::size_t embed_dim = 10;    // d
  std::size_t embed_dim_g = 10;  // d'

  std::size_t input_width() const { return history * f_in; }
  std::size_t output_width() const { return horizon * f_out; }
  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_width() : hidden; }
  std::size_t layer_out(std::size_t l) const { return l + 1 == layers ? output_width() : hidden; }

  bool operator==(const Arch&) const = default;
};

/// One layer's shared parameter reservoir: w is d' x C x F, b is d' x F.
struct LayerPool {
  Tensor w;
  Tensor b;
};

/// Full learnable state of the adaptive-graph forecaster: the adjacency
/// embedding dictionary, the parameter-pool embedding, and per-layer pools.
struct ModelParams {
  Arch arch;
  Tensor emb_a;  // N x d
  Tensor emb_g;  // N x d'
  std::vector<LayerPool> layers;

  std::size_t n_nodes() const { return emb_a.extent(0); }

  /// Pools uniform in +-1/sqrt(fan_in); embeddings 0.1 * standard normal so
  /// the initial softmax adjacency starts near uniform.
  static ModelParams init(const Arch& arch, std::size_t n_nodes, std::uint64_t seed) {
    num::Rng rng(seed);
    ModelParams p;
    p.arch = arch;
    p.emb_a = Tensor({n_nodes, arch.embed_dim});
    for (double& v : p.emb_a.data()) v = 0.1 * rng.normal();
    p.emb_g = Tensor({n_nodes, arch.embed_dim_g});
    for (double& v : p.emb_g.data()) v = 0.1 * rng.normal();
    p.layers.reserve(arch.layers);
    for (std::size_t l = 0; l < arch.layers; ++l) {
      const std::size_t c = arch.layer_in(l), f = arch.layer_out(l);
      const double bound = 1.0 / std::sqrt(static_cast<double>(c));
      LayerPool pool{Tensor({arch.embed_dim_g, c, f}), Tensor({arch.embed_dim_g, f})};
      for (double& v : pool.w.data()) v = rng.uniform(-bound, bound);
      for (double& v : pool.b.data()) v = rng.uniform(-bound, bound);
      p.layers.push_back(std::move(pool));
    }
    return p;
  }
};

/// Ablation counterpart: one dense weight and bias per layer, shared by every
/// node, convolved with a fixed uniform adjacency instead of a learned one.
struct SharedParams {
  Arch arch;
  struct Layer {
    Tensor w;  // C x F
    Tensor b;  // 1 x F
  };
  std::vector<Layer> layers;

  static SharedParams init(const Arch& arch, std::uint64_t seed) {
    num::Rng rng(seed);
    SharedParams p;
    p.arch = arch;
    p.layers.reserve(arch.layers);
    for (std::size_t l = 0; l < arch.layers; ++l) {
      const std::size_t c = arch.layer_in(l), f = arch.layer_out(l);
      const double bound = 1.0 / std::sqrt(static_cast<double>(c));
      Layer layer{Tensor({c, f}), Tensor({std::size_t{1}, f})};
      for (double& v : layer.w.data()) v = rng.uniform(-bound, bound);
      for (double& v : layer.b.data()) v = rng.uniform(-bound, bound);
      p.layers.push_back(std::move(layer));
    }
    return p;
  }
};

using Model = std::variant<ModelParams, SharedParams>;

/// Row-stochastic N x N matrix produced by the adjacency module; wraps the
/// raw tensor so the row-sum invariant is checked at the point of creation.
struct AdaptiveAdjacency {
  Tensor m;

  explicit AdaptiveAdjacency(Tensor t) : m(std::move(t)) {
    require_matrix(m, "adjacency");
    if (m.extent(0) != m.extent(1))
      throw ShapeError("adjacency: not square: " + m.shape_str());
    for (std::size_t i = 0; i < m.extent(0); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m.extent(1); ++j) {
        if (m(i, j) < 0.0) throw ContractError("adjacency: negative entry");
        row += m(i, j);
      }
      if (std::abs(row - 1.0) > 1e-9) throw ContractError("adjacency: row not stochastic");
    }
  }
};

/// Normalized adaptive adjacency softmax(relu(E * E^T)).
inline AdaptiveAdjacency ldigc_adjacency(const Tensor& emb_a) {
  require_matrix(emb_a, "ldigc_adjacency");
  return AdaptiveAdjacency(num::row_softmax(num::relu(num::matmul(emb_a, num::transpose(emb_a)))));
}

/// Theta[i] = sum_k E[i,k] * W[k]; every node draws its weight slice from the
/// shared pool through its embedding row.
inline Tensor nomor_theta(const Tensor& emb_g, const Tensor& pool) {
  require_matrix(emb_g, "nomor_theta");
  if (pool.rank() != 3) throw ShapeError("nomor_theta: pool must be rank 3, got " + pool.shape_str());
  if (emb_g.extent(1) != pool.extent(0))
    throw ShapeError("nomor_theta: embedding width vs pool depth disagree: " + emb_g.shape_str() +
                     " vs " + pool.shape_str());
  const std::size_t n = emb_g.extent(0), d = pool.extent(0), c = pool.extent(1), f = pool.extent(2);
  Tensor out({n, c, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double e = emb_g(i, k);
      if (e == 0.0) continue;
      for (std::size_t cc = 0; cc < c; ++cc)
        for (std::size_t ff = 0; ff < f; ++ff) out(i, cc, ff) += e * pool(k, cc, ff);
    }
  return out;
}

/// Per-node bias E * b from the bias pool.
inline Tensor nomor_bias(const Tensor& emb_g, const Tensor& bias_pool) {
  return num::matmul(emb_g, bias_pool);
}

/// One graph-convolution layer: Z[i] = ((I + A) X)[i] * Theta[i] + b[i].
inline Tensor gcn_layer(const Tensor& x, const AdaptiveAdjacency& adj, const Tensor& theta,
                        const Tensor& bias) {
  require_matrix(x, "gcn_layer");
  if (theta.rank() != 3) throw ShapeError("gcn_layer: theta must be rank 3, got " + theta.shape_str());
  if (adj.m.extent(0) != x.extent(0) || theta.extent(0) != x.extent(0) ||
      theta.extent(1) != x.extent(1))
    throw ShapeError("gcn_layer: shapes do not chain: x " + x.shape_str() + ", adjacency " +
                     adj.m.shape_str() + ", theta " + theta.shape_str());
  if (!bias.same_shape(Tensor({x.extent(0), theta.extent(2)})))
    throw ShapeError("gcn_layer: bias shape " + bias.shape_str() + " does not match output " +
                     std::to_string(x.extent(0)) + "x" + std::to_string(theta.extent(2)));
  const Tensor h = num::add(x, num::matmul(adj.m, x));
  const std::size_t n = h.extent(0), c = h.extent(1), f = theta.extent(2);
  Tensor z = bias;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t cc = 0; cc < c; ++cc) {
      const double hic = h(i, cc);
      if (hic == 0.0) continue;
      for (std::size_t ff = 0; ff < f; ++ff) z(i, ff) += hic * theta(i, cc, ff);
    }
  return z;
}

/// Full forecaster: adjacency computed once from the current embedding, then
/// the layer stack with relu between layers and none after the last.
inline Tensor model_forward(const ModelParams& p, const Tensor& x) {
  require_matrix(x, "model_forward");
  if (x.extent(0) != p.n_nodes() || x.extent(1) != p.arch.input_width())
    throw ShapeError("model_forward: input " + x.shape_str() + " does not match " +
                     std::to_string(p.n_nodes()) + "x" + std::to_string(p.arch.input_width()));
  const AdaptiveAdjacency adj = ldigc_adjacency(p.emb_a);
  Tensor h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Tensor theta = nomor_theta(p.emb_g, p.layers[l].w);
    const Tensor bias = nomor_bias(p.emb_g, p.layers[l].b);
    h = gcn_layer(h, adj, theta, bias);
    if (l + 1 < p.layers.size()) h = num::relu(h);
  }
  return h;
}

/// Ablation forward: uniform mixing (every row of the adjacency is 1/N) and
/// one shared dense map per layer.
inline Tensor shared_forward(const SharedParams& p, const Tensor& x) {
  require_matrix(x, "shared_forward");
  if (x.extent(1) != p.arch.input_width())
    throw ShapeError("shared_forward: input " + x.shape_str() + " does not match width " +
                     std::to_string(p.arch.input_width()));
  const std::size_t n = x.extent(0);
  Tensor h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    // (I + A) h with A = ones/N: add the column mean to every row.
    Tensor mixed = h;
    for (std::size_t c = 0; c < h.extent(1); ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += h(i, c);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) mixed(i, c) += mean;
    }
    Tensor z = num::matmul(mixed, p.layers[l].w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < z.extent(1); ++f) z(i, f) += p.layers[l].b(0, f);
    h = (l + 1 < p.layers.size()) ? num::relu(z) : std::move(z);
  }
  return h;
}

inline Tensor forward(const Model& m, const Tensor& x) {
  return std::visit(
      [&](const auto& p) -> Tensor {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ModelParams>)
          return model_forward(p, x);
        else
          return shared_forward(p, x);
      },
      m);
}

// ---- uniform access to parameter blocks ------------------------------------

inline std::vector<Tensor*> blocks(ModelParams& p) {
  std::vector<Tensor*> out{&p.emb_a, &p.emb_g};
  for (auto& l : p.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

inline std::vector<const Tensor*> blocks(const ModelParams& p) {
  std::vector<const Tensor*> out{&p.emb_a, &p.emb_g};
  for (const auto& l : p.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

inline std::vector<Tensor*> blocks(SharedParams& p) {
  std::vector<Tensor*> out;
  for (auto& l : p.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

inline std::vector<const Tensor*> blocks(const SharedParams& p) {
  std::vector<const Tensor*> out;
  for (const auto& l : p.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

inline std::vector<Tensor*> blocks(Model& m) {
  return std::visit([](auto& p) { return blocks(p); }, m);
}

inline std::vector<const Tensor*> blocks(const Model& m) {
  return std::visit([](const auto& p) { return blocks(p); }, m);
}

inline std::vector<std::string> block_names(const Model& m) {
  std::vector<std::string> names;
  if (std::holds_alternative<ModelParams>(m)) {
    const auto& p = std::get<ModelParams>(m);
    names = {"emb_a", "emb_g"};
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      names.push_back("w" + std::to_string(l));
      names.push_back("b" + std::to_string(l));
    }
  } else {
    const auto& p = std::get<SharedParams>(m);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      names.push_back("w" + std::to_string(l));
      names.push_back("b" + std::to_string(l));
    }
  }
  return names;
}

/// Indices of blocks that are node embeddings (row-partitioned across
/// clients); empty for the shared ablation model.
inline std::vector<std::size_t> embedding_block_indices(const Model& m) {
  if (std::holds_alternative<ModelParams>(m)) return {0, 1};
  return {};
}

// ---- differentiable forward on a tape ---------------------------------------

/// Registers every parameter block as a tape leaf, in blocks() order.
inline std::vector<Var> register_blocks(GradTape& tape, const Model& m) {
  std::vector<Var> vars;
  for (const Tensor* b : blocks(m)) vars.push_back(tape.leaf(*b));
  return vars;
}

/// The same computation as forward(), expressed on the tape so every
/// parameter block receives a gradient. `vars` must come from
/// register_blocks on a model of identical architecture.
inline Var forward_on_tape(GradTape& tape, const Model& m, const std::vector<Var>& vars, Var x) {
  if (std::holds_alternative<ModelParams>(m)) {
    const auto& p = std::get<ModelParams>(m);
    const Var emb_a = vars[0], emb_g = vars[1];
    const Var adj = tape.row_softmax(tape.relu(tape.matmul(emb_a, tape.transpose(emb_a))));
    Var h = x;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const Var w = vars[2 + 2 * l], b = vars[3 + 2 * l];
      const Var theta = tape.embed_pool_contract(emb_g, w);
      const Var bias = tape.matmul(emb_g, b);
      const Var mixed = tape.add(h, tape.matmul(adj, h));
      Var z = tape.add(tape.per_node_apply(mixed, theta), bias);
      h = (l + 1 < p.layers.size()) ? tape.relu(z) : z;
    }
    return h;
  }
  const auto& p = std::get<SharedParams>(m);
  const std::size_t n = tape.value(x).extent(0);
  Tensor uniform({n, n});
  for (double& v : uniform.data()) v = 1.0 / static_cast<double>(n);
  const Var adj = tape.leaf(std::move(uniform));
  Var h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Var w = vars[2 * l], b = vars[2 * l + 1];
    const Var mixed = tape.add(h, tape.matmul(adj, h));
    // broadcast the 1 x F bias over rows via ones * b
    Tensor ones({n, std::size_t{1}});
    for (double& v : ones.data()) v = 1.0;
    const Var bias = tape.matmul(tape.leaf(std::move(ones)), b);
    Var z = tape.add(tape.matmul(mixed, w), bias);
    h = (l + 1 < p.layers.size()) ? tape.relu(z) : z;
  }
  return h;
}

/// Restricts a model to the node range [lo, hi): embedding rows are sliced,
/// pools are shared and copied whole. The shared ablation model has no
/// node-indexed state, so it is copied as is.
inline Model slice_nodes(const Model& m, std::size_t lo, std::size_t hi) {
  if (std::holds_alternative<SharedParams>(m)) return m;
  const auto& p = std::get<ModelParams>(m);
  if (hi > p.n_nodes() || lo >= hi)
    throw ContractError("slice_nodes: bad range [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + ") for " + std::to_string(p.n_nodes()) + " nodes");
  ModelParams out;
  out.arch = p.arch;
  const std::size_t n = hi - lo;
  out.emb_a = Tensor({n, p.arch.embed_dim});
  out.emb_g = Tensor({n, p.arch.embed_dim_g});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p.arch.embed_dim; ++j) out.emb_a(i, j) = p.emb_a(lo + i, j);
    for (std::size_t j = 0; j < p.arch.embed_dim_g; ++j) out.emb_g(i, j) = p.emb_g(lo + i, j);
  }
  out.layers = p.layers;
  return out;
}

}  // namespace fedldr::gcn
