#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <future>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedldr/data.hpp"
#include "fedldr/metrics.hpp"
#include "fedldr/model.hpp"
#include "fedldr/serialize.hpp"
#include "fedldr/strategy.hpp"
#include "fedldr/trainer.hpp"

namespace fedldr::fed {

using data::ClientPartition;
using data::WindowSample;
using gcn::Model;
using gcn::ModelParams;
using gcn::SharedParams;
using num::Tensor;

/// Server-side state carried across rounds.
struct GlobalState {
  Model model;
  long round = 0;
  double rho = 0.5;        // server blend weight on client embedding rows
  double server_lr = 0.01; // FedOpt step size
  train::AdamState server_opt;
};

/// What one client sends back: its trained parameters (embedding rows for its
/// own nodes plus full pool copies, or the whole ablation model) and the
/// sample count used as aggregation weight.
struct ClientUpdate {
  std::size_t client_id = 0;
  std::size_t lo = 0, hi = 0;
  Model params;
  std::size_t n_k = 0;
};

/// What one client receives at the start of a round.
struct ClientView {
  std::size_t client_id = 0;
  std::size_t lo = 0, hi = 0;
  Model params;
  std::size_t bytes_down = 0;
};

// ---- broadcast -----------------------------------------------------------------

namespace detail {

inline void require_contiguous(const ClientPartition& p) {
  if (p.ranges.empty()) throw ContractError("broadcast: empty partition");
  std::size_t expect = 0;
  for (const auto& r : p.ranges) {
    if (r.lo != expect || r.hi <= r.lo)
      throw ContractError("broadcast: partition gap or overlap at node " + std::to_string(expect));
    expect = r.hi;
  }
}

}  // namespace detail

/// Client k gets its own embedding rows and a full copy of every pool; the
/// ablation model has no node-indexed state so it is copied whole.
inline std::vector<ClientView> broadcast(const GlobalState& g, const ClientPartition& p) {
  detail::require_contiguous(p);
  if (std::holds_alternative<ModelParams>(g.model) &&
      p.ranges.back().hi != std::get<ModelParams>(g.model).n_nodes())
    throw ContractError("broadcast: partition covers " + std::to_string(p.ranges.back().hi) +
                        " nodes, model has " +
                        std::to_string(std::get<ModelParams>(g.model).n_nodes()));
  std::vector<ClientView> views;
  views.reserve(p.ranges.size());
  for (std::size_t k = 0; k < p.ranges.size(); ++k) {
    ClientView v;
    v.client_id = k;
    v.lo = p.ranges[k].lo;
    v.hi = p.ranges[k].hi;
    v.params = gcn::slice_nodes(g.model, v.lo, v.hi);
    v.bytes_down = gcn::payload_bytes(v.params);
    views.push_back(std::move(v));
  }
  return views;
}

/// Serialized upload size for one client under the given strategy. Purely
/// local training uploads nothing; every federated strategy uploads the
/// client's full parameter payload (embedding rows plus pools for the
/// adaptive model, the whole model for the ablation baselines).
inline std::size_t comm_bytes(const ClientUpdate& u, StrategyKind kind) {
  if (kind == StrategyKind::LOCAL_ONLY) return 0;
  return gcn::payload_bytes(u.params);
}

// ---- aggregation ---------------------------------------------------------------

namespace detail {

inline std::vector<const ClientUpdate*> sorted_by_id(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw AggregationError("aggregate: no client updates");
  std::vector<const ClientUpdate*> sorted;
  sorted.reserve(updates.size());
  for (const ClientUpdate& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  return sorted;
}

inline void require_tiling(const std::vector<const ClientUpdate*>& sorted, std::size_t n_nodes) {
  std::size_t expect = 0;
  for (const ClientUpdate* u : sorted) {
    if (u->lo != expect)
      throw ContractError("aggregate: nodes [" + std::to_string(expect) + ", " +
                          std::to_string(u->lo) + ") not covered by any client");
    expect = u->hi;
  }
  if (expect != n_nodes)
    throw ContractError("aggregate: nodes [" + std::to_string(expect) + ", " +
                        std::to_string(n_nodes) + ") not covered by any client");
}

inline double total_weight(const std::vector<const ClientUpdate*>& sorted) {
  double total = 0.0;
  for (const ClientUpdate* u : sorted) {
    if (u->n_k == 0) throw ContractError("aggregate: client with zero samples");
    total += static_cast<double>(u->n_k);
  }
  return total;
}

/// Sample-count-weighted mean of block `b` across clients, accumulated in
/// ascending client order so the result is scheduling-independent.
inline Tensor wmean_block(const std::vector<const ClientUpdate*>& sorted, std::size_t b,
                          double total) {
  const Tensor& first = *gcn::blocks(sorted.front()->params)[b];
  Tensor out = Tensor::zeros_like(first);
  for (const ClientUpdate* u : sorted) {
    const Tensor& t = *gcn::blocks(u->params)[b];
    if (!t.same_shape(first))
      throw ContractError("aggregate: block shape " + t.shape_str() + " vs " + first.shape_str());
    const double w = static_cast<double>(u->n_k) / total;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * t[i];
  }
  return out;
}

/// Coordinate-wise median of block `b`; even client counts take the mean of
/// the two middle values.
inline Tensor median_block(const std::vector<const ClientUpdate*>& sorted, std::size_t b) {
  const Tensor& first = *gcn::blocks(sorted.front()->params)[b];
  Tensor out = Tensor::zeros_like(first);
  std::vector<double> column(sorted.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      const Tensor& t = *gcn::blocks(sorted[k]->params)[b];
      if (!t.same_shape(first))
        throw ContractError("aggregate: block shape " + t.shape_str() + " vs " + first.shape_str());
      column[k] = t[i];
    }
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    out[i] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

/// Writes client embedding rows into the global matrices as a convex blend:
/// new row = (1 - rho) * old + rho * client. rho = 1 is plain replacement.
inline void route_embedding_rows(ModelParams& global,
                                 const std::vector<const ClientUpdate*>& sorted, double rho) {
  for (const ClientUpdate* u : sorted) {
    const auto& local = std::get<ModelParams>(u->params);
    if (local.n_nodes() != u->hi - u->lo)
      throw ContractError("aggregate: client " + std::to_string(u->client_id) + " carries " +
                          std::to_string(local.n_nodes()) + " rows for range of " +
                          std::to_string(u->hi - u->lo));
    for (std::size_t r = 0; r < local.n_nodes(); ++r) {
      for (std::size_t c = 0; c < global.arch.embed_dim; ++c)
        global.emb_a(u->lo + r, c) =
            (1.0 - rho) * global.emb_a(u->lo + r, c) + rho * local.emb_a(r, c);
      for (std::size_t c = 0; c < global.arch.embed_dim_g; ++c)
        global.emb_g(u->lo + r, c) =
            (1.0 - rho) * global.emb_g(u->lo + r, c) + rho * local.emb_g(r, c);
    }
  }
}

/// One server-side adaptive step on the pseudo-gradient global - target,
/// restricted to the listed blocks.
inline void server_opt_step(GlobalState& g, const std::vector<Tensor>& targets,
                            const std::vector<std::size_t>& block_idx) {
  std::vector<Tensor*> all = gcn::blocks(g.model);
  if (g.server_opt.m.empty()) g.server_opt = train::AdamState::like(gcn::blocks(std::as_const(g.model)));
  std::vector<Tensor> grads;
  grads.reserve(all.size());
  for (const Tensor* b : all) grads.push_back(Tensor::zeros_like(*b));
  for (std::size_t j = 0; j < block_idx.size(); ++j) {
    const std::size_t b = block_idx[j];
    grads[b] = num::sub(*all[b], targets[j]);
    if (!grads[b].all_finite())
      throw AggregationError("aggregate: non-finite pseudo-gradient in block " + std::to_string(b));
  }
  adam_step(all, grads, g.server_opt, g.server_lr, gcn::block_names(g.model));
}

}  // namespace detail

/// Full-protocol aggregation: embedding rows blended with weight rho (each
/// row has exactly one contributing client), pools averaged by sample count.
inline void aggregate_fedldr(GlobalState& g, const std::vector<ClientUpdate>& updates) {
  auto& global = std::get<ModelParams>(g.model);
  const auto sorted = detail::sorted_by_id(updates);
  detail::require_tiling(sorted, global.n_nodes());
  const double total = detail::total_weight(sorted);
  detail::route_embedding_rows(global, sorted, g.rho);
  // Pool blocks sit after the two embeddings in blocks() order.
  std::vector<Tensor*> blocks = gcn::blocks(g.model);
  for (std::size_t b = 2; b < blocks.size(); ++b)
    *blocks[b] = detail::wmean_block(sorted, b, total);
  g.round += 1;
}

/// Sample-count-weighted mean of every parameter block.
inline Model aggregate_fedavg(const std::vector<ClientUpdate>& updates) {
  const auto sorted = detail::sorted_by_id(updates);
  const double total = detail::total_weight(sorted);
  Model out = sorted.front()->params;
  std::vector<Tensor*> blocks = gcn::blocks(out);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    *blocks[b] = detail::wmean_block(sorted, b, total);
  return out;
}

/// Coordinate-wise median of every parameter block.
inline Model aggregate_fedmedian(const std::vector<ClientUpdate>& updates) {
  const auto sorted = detail::sorted_by_id(updates);
  Model out = sorted.front()->params;
  std::vector<Tensor*> blocks = gcn::blocks(out);
  for (std::size_t b = 0; b < blocks.size(); ++b) *blocks[b] = detail::median_block(sorted, b);
  return out;
}

/// Server-optimizer aggregation: pseudo-gradient = global - weighted mean,
/// consumed by one bias-corrected adaptive step at the server learning rate.
inline void aggregate_fedopt(GlobalState& g, const std::vector<ClientUpdate>& updates) {
  const auto sorted = detail::sorted_by_id(updates);
  const double total = detail::total_weight(sorted);
  const std::size_t n_blocks = gcn::blocks(std::as_const(g.model)).size();
  std::vector<Tensor> targets;
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    targets.push_back(detail::wmean_block(sorted, b, total));
    idx.push_back(b);
  }
  detail::server_opt_step(g, targets, idx);
  g.round += 1;
}

/// Routes one round of updates through the chosen strategy. Hybrids keep the
/// adaptive model's node-owned embedding rows (plain replacement, since each
/// row has a single contributor) and apply their namesake operator to pools.
inline void apply_strategy(GlobalState& g, std::vector<ClientUpdate> updates, StrategyKind kind) {
  switch (kind) {
    case StrategyKind::LOCAL_ONLY:
      return;  // nothing is shared
    case StrategyKind::FED_LDR:
      aggregate_fedldr(g, updates);
      return;
    case StrategyKind::FEDAVG:
      g.model = aggregate_fedavg(updates);
      g.round += 1;
      return;
    case StrategyKind::FEDMEDIAN:
      g.model = aggregate_fedmedian(updates);
      g.round += 1;
      return;
    case StrategyKind::FEDOPT:
      aggregate_fedopt(g, updates);
      return;
    case StrategyKind::FEDAVG_LDR:
    case StrategyKind::FEDMEDIAN_LDR:
    case StrategyKind::FEDOPT_LDR: {
      auto& global = std::get<ModelParams>(g.model);
      const auto sorted = detail::sorted_by_id(updates);
      detail::require_tiling(sorted, global.n_nodes());
      const double total = detail::total_weight(sorted);
      detail::route_embedding_rows(global, sorted, 1.0);
      std::vector<Tensor*> blocks = gcn::blocks(g.model);
      if (kind == StrategyKind::FEDAVG_LDR) {
        for (std::size_t b = 2; b < blocks.size(); ++b)
          *blocks[b] = detail::wmean_block(sorted, b, total);
      } else if (kind == StrategyKind::FEDMEDIAN_LDR) {
        for (std::size_t b = 2; b < blocks.size(); ++b)
          *blocks[b] = detail::median_block(sorted, b);
      } else {
        std::vector<Tensor> targets;
        std::vector<std::size_t> idx;
        for (std::size_t b = 2; b < blocks.size(); ++b) {
          targets.push_back(detail::wmean_block(sorted, b, total));
          idx.push_back(b);
        }
        detail::server_opt_step(g, targets, idx);
      }
      g.round += 1;
      return;
    }
  }
}

// ---- the round loop -------------------------------------------------------------

/// Everything run_rounds needs besides the data.
struct RunSpec {
  StrategyKind strategy = StrategyKind::FED_LDR;
  gcn::Arch arch;
  std::size_t clients = 2;
  std::size_t rounds = 50;
  double rho = 0.5;
  double server_lr = 0.01;
  train::TrainConfig train;
  std::uint64_t seed = 0;
  double min_improvement = 1e-4;
  std::size_t max_stall_rounds = 5;
};

/// Normalized windows for the three splits plus the node partition. The
/// trainer and evaluator both consume this form.
struct PreparedData {
  data::NormStats stats;
  std::vector<WindowSample> train, val, test;
  ClientPartition partition;
};

struct RoundReport {
  long round = 0;
  metrics::MetricReport train, val, test;
  double mean_client_loss = 0.0;
  std::size_t bytes_up = 0, bytes_down = 0;
  double seconds = 0.0;
};

struct RunResult {
  std::vector<RoundReport> rounds;
  Model global;                      // parameters of the best-validation round
  std::vector<Model> local_models;   // LOCAL_ONLY's per-client models
  long best_round = 0;               // round whose validation MAE was lowest
  metrics::MetricReport final_test;  // test metrics at the best round
  bool has_final = false;
  std::size_t total_bytes_up = 0, total_bytes_down = 0;
};

namespace detail {

/// Rows [lo, hi) of one window, as a client-local sample.
inline WindowSample slice_window(const WindowSample& w, std::size_t lo, std::size_t hi) {
  WindowSample out;
  out.origin = w.origin;
  out.input = Tensor({hi - lo, w.input.extent(1)});
  out.target = Tensor({hi - lo, w.target.extent(1)});
  for (std::size_t r = lo; r < hi; ++r) {
    for (std::size_t c = 0; c < w.input.extent(1); ++c) out.input(r - lo, c) = w.input(r, c);
    for (std::size_t c = 0; c < w.target.extent(1); ++c) out.target(r - lo, c) = w.target(r, c);
  }
  return out;
}

/// Stacks denormalized predictions/targets over a split and evaluates. For
/// per-client models (LOCAL_ONLY) each client predicts its own rows.
inline metrics::MetricReport evaluate_split(const std::vector<WindowSample>& windows,
                                            const data::NormStats& stats, const Model* global,
                                            const std::vector<Model>* locals,
                                            const ClientPartition& partition) {
  if (windows.empty()) throw ContractError("evaluate: split has no windows");
  const std::size_t n = windows.front().target.extent(0);
  const std::size_t width = windows.front().target.extent(1);
  Tensor pred({windows.size() * n, width});
  Tensor target({windows.size() * n, width});
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const WindowSample& w = windows[wi];
    Tensor p({n, width});
    if (global != nullptr) {
      p = gcn::forward(*global, w.input);
    } else {
      for (std::size_t k = 0; k < partition.ranges.size(); ++k) {
        const auto [lo, hi] = partition.ranges[k];
        const WindowSample sliced = slice_window(w, lo, hi);
        const Tensor part = gcn::forward((*locals)[k], sliced.input);
        for (std::size_t r = 0; r < hi - lo; ++r)
          for (std::size_t c = 0; c < width; ++c) p(lo + r, c) = part(r, c);
      }
    }
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        pred(wi * n + r, c) = p(r, c);
        target(wi * n + r, c) = w.target(r, c);
      }
  }
  return metrics::evaluate(data::denormalize(pred, stats), data::denormalize(target, stats));
}

}  // namespace detail

/// The round loop: broadcast, train all clients in parallel, aggregate in
/// client-id order, evaluate every split, and stop early once validation MAE
/// has not improved by min_improvement for max_stall_rounds straight rounds.
inline RunResult run_rounds(const RunSpec& spec, const PreparedData& pd) {
  if (spec.clients != pd.partition.ranges.size())
    throw ConfigError("run_rounds: spec.clients=" + std::to_string(spec.clients) +
                      " but partition has " + std::to_string(pd.partition.ranges.size()));
  if (pd.train.empty()) throw ContractError("run_rounds: no training windows");
  const std::size_t n_nodes = pd.partition.ranges.back().hi;

  GlobalState g;
  g.rho = spec.rho;
  g.server_lr = spec.server_lr;
  const std::uint64_t init_seed = num::derive_seed(spec.seed, 0xFFFFu, 0xFFFFu);
  g.model = uses_ldigc_model(spec.strategy)
                ? Model(ModelParams::init(spec.arch, n_nodes, init_seed))
                : Model(SharedParams::init(spec.arch, init_seed));

  RunResult result;
  result.global = g.model;

  // Per-client training window sets, sliced once.
  std::vector<std::vector<WindowSample>> client_windows(spec.clients);
  for (std::size_t k = 0; k < spec.clients; ++k) {
    const auto [lo, hi] = pd.partition.ranges[k];
    client_windows[k].reserve(pd.train.size());
    for (const WindowSample& w : pd.train)
      client_windows[k].push_back(detail::slice_window(w, lo, hi));
  }

  const bool local_only = spec.strategy == StrategyKind::LOCAL_ONLY;
  std::vector<Model> locals;  // persists across rounds under LOCAL_ONLY

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stall = 0;

  for (std::size_t r = 1; r <= spec.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundReport report;
    report.round = static_cast<long>(r);

    // Broadcast. LOCAL_ONLY downloads the common initialization once and
    // never hears from the server again.
    std::vector<ClientView> views;
    if (!local_only || r == 1) {
      views = broadcast(g, pd.partition);
      for (const ClientView& v : views) report.bytes_down += v.bytes_down;
      if (local_only)
        for (ClientView& v : views) locals.push_back(std::move(v.params));
    }

    // Fan out local training; every client gets its own derived seed.
    std::vector<std::future<train::LocalResult>> futures;
    futures.reserve(spec.clients);
    for (std::size_t k = 0; k < spec.clients; ++k) {
      const Model& start = local_only ? locals[k] : views[k].params;
      train::TrainConfig cfg = spec.train;
      cfg.seed = num::derive_seed(spec.seed, r, k);
      if (!uses_proximal(spec.strategy)) cfg.mu = 0.0;
      futures.push_back(std::async(std::launch::async, [&client_windows, k, start, cfg] {
        return train::local_train(client_windows[k], start, cfg);
      }));
    }

    std::vector<ClientUpdate> updates;
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < spec.clients; ++k) {
      train::LocalResult lr;
      try {
        lr = futures[k].get();
      } catch (const std::exception& e) {
        throw TrainingError("round " + std::to_string(r) + ", client " + std::to_string(k) +
                            ": " + e.what());
      }
      ClientUpdate u;
      u.client_id = k;
      u.lo = pd.partition.ranges[k].lo;
      u.hi = pd.partition.ranges[k].hi;
      u.params = std::move(lr.params);
      u.n_k = lr.stats.n_k;
      loss_sum += lr.stats.epoch_loss.empty() ? 0.0 : lr.stats.epoch_loss.back();
      report.bytes_up += comm_bytes(u, spec.strategy);
      updates.push_back(std::move(u));
    }
    report.mean_client_loss = loss_sum / static_cast<double>(spec.clients);

    if (local_only) {
      for (ClientUpdate& u : updates) locals[u.client_id] = std::move(u.params);
      g.round += 1;
    } else {
      apply_strategy(g, std::move(updates), spec.strategy);
    }

    const Model* global_eval = local_only ? nullptr : &g.model;
    const std::vector<Model>* locals_eval = local_only ? &locals : nullptr;
    report.train = detail::evaluate_split(pd.train, pd.stats, global_eval, locals_eval, pd.partition);
    report.val = detail::evaluate_split(pd.val, pd.stats, global_eval, locals_eval, pd.partition);
    report.test = detail::evaluate_split(pd.test, pd.stats, global_eval, locals_eval, pd.partition);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    result.total_bytes_up += report.bytes_up;
    result.total_bytes_down += report.bytes_down;

    if (report.val.mae < best_val - spec.min_improvement) {
      stall = 0;
    } else {
      ++stall;
    }
    if (report.val.mae < best_val) {
      best_val = report.val.mae;
      result.best_round = report.round;
      result.final_test = report.test;
      result.has_final = true;
      result.global = g.model;
      if (local_only) result.local_models = locals;
    }
    result.rounds.push_back(report);
    if (stall >= spec.max_stall_rounds) break;
  }

  if (result.rounds.empty()) result.global = g.model;
  if (local_only && result.local_models.empty()) result.local_models = locals;
  return result;
}

}  // namespace fedldr::fed
