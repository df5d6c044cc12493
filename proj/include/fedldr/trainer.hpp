#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedldr/autodiff.hpp"
#include "fedldr/data.hpp"
#include "fedldr/metrics.hpp"
#include "fedldr/model.hpp"
#include "fedldr/optimizer.hpp"
#include "fedldr/rng.hpp"

namespace fedldr::train {

using data::WindowSample;
using gcn::Model;
using gcn::ModelParams;
using num::GradTape;
using num::Tensor;
using num::Var;

struct TrainConfig {
  double learning_rate = 0.003;
  double mu = 0.01;          // proximal pull toward the broadcast embeddings
  std::size_t epochs = 2;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
};

struct LocalStats {
  std::vector<double> epoch_loss;  // mean objective per epoch
  std::size_t n_k = 0;             // windows x owned nodes, the aggregation weight
  double seconds = 0.0;
};

struct LocalResult {
  Model params;
  LocalStats stats;
};

/// Plain (non-differentiable) training loss, shared with the tape version.
inline double mae_loss(const Tensor& pred, const Tensor& target) {
  return metrics::mae(pred, target);
}

/// (mu/2) * squared Frobenius distance between the two embedding matrices.
/// Pools are deliberately not penalized; only the exchanged quantities are
/// pulled toward the broadcast values.
inline double proximal_penalty(const ModelParams& local, const ModelParams& global, double mu) {
  if (local.arch != global.arch || local.n_nodes() != global.n_nodes())
    throw ContractError("proximal_penalty: architecture mismatch");
  if (mu == 0.0) return 0.0;
  const double da = num::sum_squares(num::sub(local.emb_a, global.emb_a));
  const double dg = num::sum_squares(num::sub(local.emb_g, global.emb_g));
  return 0.5 * mu * (da + dg);
}

namespace detail {

/// Mean data loss over a batch plus the proximal term, as one tape scalar.
/// `vars` are the model's blocks registered on this tape.
inline Var batch_objective(GradTape& tape, const Model& m, const std::vector<Var>& vars,
                           const std::vector<const WindowSample*>& batch, double mu,
                           const ModelParams* anchor) {
  Var total = tape.leaf(Tensor::scalar(0.0));
  for (const WindowSample* w : batch) {
    const Var x = tape.leaf(w->input);
    const Var y = tape.leaf(w->target);
    const Var pred = gcn::forward_on_tape(tape, m, vars, x);
    total = tape.add(total, tape.mean_abs_error(pred, y));
  }
  Var obj = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  if (mu > 0.0 && anchor != nullptr && std::holds_alternative<ModelParams>(m)) {
    const Var da = tape.sum_squares(tape.sub(vars[0], tape.leaf(anchor->emb_a)));
    const Var dg = tape.sum_squares(tape.sub(vars[1], tape.leaf(anchor->emb_g)));
    obj = tape.add(obj, tape.scale(tape.add(da, dg), 0.5 * mu));
  }
  return obj;
}

inline double plain_objective(const Model& m, const std::vector<const WindowSample*>& batch,
                              double mu, const ModelParams* anchor) {
  double total = 0.0;
  for (const WindowSample* w : batch) total += mae_loss(gcn::forward(m, w->input), w->target);
  total /= static_cast<double>(batch.size());
  if (mu > 0.0 && anchor != nullptr && std::holds_alternative<ModelParams>(m))
    total += proximal_penalty(std::get<ModelParams>(m), *anchor, mu);
  return total;
}

}  // namespace detail

/// Algorithm: copy the broadcast parameters, then run `epochs` passes of
/// shuffled mini-batches, each stepping Adam on d(mean MAE + proximal)/dθ
/// with a global-norm clip. The proximal anchor is the broadcast model
/// itself and applies only to the adaptive model's embeddings.
inline LocalResult local_train(const std::vector<WindowSample>& windows, const Model& globals,
                               const TrainConfig& cfg) {
  if (windows.empty()) throw ContractError("local_train: client has no training windows");
  const auto t0 = std::chrono::steady_clock::now();

  LocalResult out;
  out.params = globals;
  out.stats.n_k = windows.size() * windows.front().input.extent(0);

  // epochs == 0 is the documented no-op: the update equals the broadcast.
  if (cfg.epochs == 0) return out;

  const ModelParams* anchor =
      std::holds_alternative<ModelParams>(globals) ? &std::get<ModelParams>(globals) : nullptr;
  const std::vector<std::string> names = gcn::block_names(out.params);
  AdamState opt = AdamState::like(gcn::blocks(std::as_const(out.params)));

  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    num::Rng rng(num::derive_seed(cfg.seed, epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const WindowSample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&windows[order[i]]);

      GradTape tape;
      const std::vector<Var> vars = gcn::register_blocks(tape, out.params);
      const Var obj = detail::batch_objective(tape, out.params, vars, batch, cfg.mu, anchor);
      const double loss = tape.value(obj)[0];
      if (!std::isfinite(loss))
        throw TrainingError("local_train: non-finite loss in epoch " + std::to_string(epoch));
      loss_sum += loss;
      ++n_batches;
      tape.backward(obj);

      std::vector<Tensor> grads;
      for (const Var v : vars) grads.push_back(tape.grad(v));
      clip_global_norm(grads, cfg.clip_norm);
      std::vector<Tensor*> blocks = gcn::blocks(out.params);
      adam_step(blocks, grads, opt, cfg.learning_rate, names, cfg.beta1, cfg.beta2, cfg.eps);
    }
    out.stats.epoch_loss.push_back(loss_sum / static_cast<double>(n_batches));
  }

  out.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Central-difference check of the tape gradients for the full local
/// objective on one window. Returns the worst relative error over every
/// scalar parameter. `anchor` (with mu > 0) exercises the proximal term;
/// leave it null to check the data term alone.
inline double grad_check(const ModelParams& p, const WindowSample& sample, double h,
                         double mu = 0.0, const ModelParams* anchor = nullptr) {
  if (h <= 0.0) throw ContractError("grad_check: step must be positive");
  Model m = p;
  const std::vector<const WindowSample*> batch{&sample};

  GradTape tape;
  const std::vector<Var> vars = gcn::register_blocks(tape, m);
  const Var obj = detail::batch_objective(tape, m, vars, batch, mu, anchor);
  tape.backward(obj);
  std::vector<Tensor> grads;
  for (const Var v : vars) grads.push_back(tape.grad(v));

  double worst = 0.0;
  std::vector<Tensor*> blocks = gcn::blocks(m);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b]->size(); ++i) {
      double& cell = (*blocks[b])[i];
      const double saved = cell;
      cell = saved + h;
      const double up = detail::plain_objective(m, batch, mu, anchor);
      cell = saved - h;
      const double down = detail::plain_objective(m, batch, mu, anchor);
      cell = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[b][i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({1e-6, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace fedldr::train
