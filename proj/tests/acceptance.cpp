// Acceptance gate: eight go/no-go checks over the whole stack, each printed
// as a single PASS/FAIL line with its measured runtime. Exits with the number
// of failed checks. Tolerances are hard; there is no "close enough" rerun
// logic here, a red line means the build is not acceptable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedldr/fedldr.hpp"

namespace fs = std::filesystem;
using fedldr::gcn::Arch;
using fedldr::gcn::Model;
using fedldr::gcn::ModelParams;
using fedldr::gcn::SharedParams;
using fedldr::num::Rng;
using fedldr::num::Tensor;
namespace data = fedldr::data;
namespace fed = fedldr::fed;
namespace gcn = fedldr::gcn;
namespace harness = fedldr::harness;
namespace train = fedldr::train;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

fs::path work_dir() {
  static const fs::path p = [] {
    const fs::path d = fs::temp_directory_path() / "fedldr_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

fs::path write_file(const std::string& name, const std::string& body) {
  const fs::path p = work_dir() / name;
  std::ofstream os(p);
  os << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

double l2(const std::vector<double>& a) {
  double sq = 0.0;
  for (const double v : a) sq += v * v;
  return std::sqrt(sq);
}

// ---- 1: gradient correctness --------------------------------------------------

Outcome criterion_gradients() {
  Arch a;
  a.history = 4;
  a.horizon = 2;
  a.hidden = 8;
  a.layers = 2;
  a.embed_dim = 4;
  a.embed_dim_g = 4;

  Rng rng(1001);
  const auto p = ModelParams::init(a, 6, 1002);
  const auto anchor = ModelParams::init(a, 6, 1003);
  data::WindowSample w;
  w.origin = 0;
  w.input = Tensor({6, a.input_width()});
  w.target = Tensor({6, a.output_width()});
  for (double& v : w.input.data()) v = rng.uniform(-1, 1);
  for (double& v : w.target.data()) v = rng.uniform(-1, 1);

  const double err = train::grad_check(p, w, 1e-5, 0.01, &anchor);

  // The CLI verb must agree on a config with the same dimensions.
  const auto cfg = write_file("gradcheck.cfg",
                              "nodes = 6\nsteps = 60\nhistory = 4\nhorizon = 2\nhidden = 8\n"
                              "layers = 2\nembed_dim = 4\nembed_dim_g = 4\nclients = 2\nseed = 5\n");
  const int rc = harness::run_grad_check(cfg.string());

  Outcome o;
  o.ok = err < 1e-4 && rc == 0;
  o.detail = "max rel err " + fmt(err) + ", cli rc " + std::to_string(rc);
  return o;
}

// ---- 2: adjacency contract ----------------------------------------------------

Outcome criterion_adjacency() {
  Rng rng(2001);
  double worst_row = 0.0, worst_equiv = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 31;  // up to 32 nodes
    const std::size_t d = 1 + rng.next_u64() % 6;
    Tensor e({n, d});
    for (double& v : e.data()) v = rng.normal();
    const auto adj = gcn::ldigc_adjacency(e);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (adj.m(i, j) < 0.0) return {false, "negative entry"};
        row += adj.m(i, j);
      }
      worst_row = std::max(worst_row, std::abs(row - 1.0));
    }

    // Relabeling nodes relabels the adjacency the same way.
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    Tensor ep({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) ep(i, k) = e(perm[i], k);
    const auto adj_p = gcn::ldigc_adjacency(ep);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        worst_equiv = std::max(worst_equiv, std::abs(adj_p.m(i, j) - adj.m(perm[i], perm[j])));
  }
  Outcome o;
  o.ok = worst_row < 1e-9 && worst_equiv < 1e-10;
  o.detail = "row sum err " + fmt(worst_row) + ", equivariance err " + fmt(worst_equiv);
  return o;
}

// ---- 3: oracle equivalence ----------------------------------------------------

Outcome criterion_oracles() {
  Rng rng(3001);
  double worst = 0.0;

  // Per-node parameter assembly against a plain triple loop.
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 5, d = 1 + rng.next_u64() % 4,
                      c = 1 + rng.next_u64() % 4, f = 1 + rng.next_u64() % 4;
    Tensor e({n, d}), pool({d, c, f});
    for (double& v : e.data()) v = rng.uniform(-1, 1);
    for (double& v : pool.data()) v = rng.uniform(-1, 1);
    const Tensor got = gcn::nomor_theta(e, pool);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t cc = 0; cc < c; ++cc)
        for (std::size_t ff = 0; ff < f; ++ff) {
          double want = 0.0;
          for (std::size_t k = 0; k < d; ++k) want += e(i, k) * pool(k, cc, ff);
          worst = std::max(worst, std::abs(got(i, cc, ff) - want));
        }
  }

  // One convolution layer against its definition, node by node.
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 4, c = 1 + rng.next_u64() % 4,
                      f = 1 + rng.next_u64() % 4;
    Tensor am({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        am(i, j) = 0.1 + rng.uniform(0.0, 1.0);
        sum += am(i, j);
      }
      for (std::size_t j = 0; j < n; ++j) am(i, j) /= sum;
    }
    Tensor x({n, c}), theta({n, c, f}), bias({n, f});
    for (double& v : x.data()) v = rng.uniform(-1, 1);
    for (double& v : theta.data()) v = rng.uniform(-1, 1);
    for (double& v : bias.data()) v = rng.uniform(-1, 1);
    const Tensor got = gcn::gcn_layer(x, gcn::AdaptiveAdjacency(am), theta, bias);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ff = 0; ff < f; ++ff) {
        double want = bias(i, ff);
        for (std::size_t cc = 0; cc < c; ++cc) {
          double mixed = x(i, cc);
          for (std::size_t j = 0; j < n; ++j) mixed += am(i, j) * x(j, cc);
          want += mixed * theta(i, cc, ff);
        }
        worst = std::max(worst, std::abs(got(i, ff) - want));
      }
  }

  // Both whole-model aggregators against packed-vector oracles.
  Arch a;
  a.history = 2;
  a.horizon = 1;
  a.hidden = 3;
  a.layers = 2;
  a.embed_dim = 2;
  a.embed_dim_g = 2;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k_clients = 2 + rng.next_u64() % 4;
    std::vector<fed::ClientUpdate> updates;
    std::vector<std::vector<double>> packs;
    std::vector<double> weights;
    for (std::size_t k = 0; k < k_clients; ++k) {
      Model m = SharedParams::init(a, 3000 + trial);
      for (Tensor* b : gcn::blocks(m))
        for (double& v : b->data()) v = rng.uniform(-2, 2);
      const std::size_t n_k = 1 + rng.next_u64() % 9;
      packs.push_back(gcn::pack(m));
      weights.push_back(static_cast<double>(n_k));
      updates.push_back({k, 0, 0, std::move(m), n_k});
    }
    double total = 0.0;
    for (const double w : weights) total += w;

    const auto avg = gcn::pack(fed::aggregate_fedavg(updates));
    const auto med = gcn::pack(fed::aggregate_fedmedian(updates));
    std::vector<double> column(k_clients);
    for (std::size_t i = 0; i < avg.size(); ++i) {
      double want = 0.0;
      for (std::size_t k = 0; k < k_clients; ++k) want += weights[k] / total * packs[k][i];
      worst = std::max(worst, std::abs(avg[i] - want));
      for (std::size_t k = 0; k < k_clients; ++k) column[k] = packs[k][i];
      std::sort(column.begin(), column.end());
      const double m = k_clients % 2 == 1
                           ? column[k_clients / 2]
                           : 0.5 * (column[k_clients / 2 - 1] + column[k_clients / 2]);
      worst = std::max(worst, std::abs(med[i] - m));
    }
  }

  Outcome o;
  o.ok = worst < 1e-12;
  o.detail = "worst oracle deviation " + fmt(worst);
  return o;
}

// ---- 4: memorization capacity -------------------------------------------------

Outcome criterion_memorization() {
  const auto [raw, truth] = data::generate_synthetic(8, 200, harness::data_seed(4001), 0.01);
  (void)truth;
  Arch a;
  a.history = 12;
  a.horizon = 3;
  a.hidden = 16;
  a.layers = 2;
  a.embed_dim = 4;
  a.embed_dim_g = 4;

  const auto parts = data::split_temporal(raw, a.history + a.horizon);
  const auto stats = data::fit_normalizer(parts[0]);
  const auto windows = data::make_windows(data::normalize(parts[0], stats), a.history, a.horizon);

  train::TrainConfig cfg;
  cfg.epochs = 500;
  cfg.mu = 0.0;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.01;
  cfg.seed = 4002;
  const Model globals = ModelParams::init(a, 8, 4003);
  const auto res = train::local_train(windows, globals, cfg);

  // Final training error and target spread, both in raw units.
  double mae_sum = 0.0;
  std::vector<double> targets;
  for (const auto& w : windows) {
    const Tensor pred = data::denormalize(gcn::forward(res.params, w.input), stats);
    const Tensor target = data::denormalize(w.target, stats);
    mae_sum += fedldr::metrics::mae(pred, target);
    for (std::size_t i = 0; i < target.size(); ++i) targets.push_back(target[i]);
  }
  const double mae = mae_sum / static_cast<double>(windows.size());
  double mean = 0.0;
  for (const double t : targets) mean += t;
  mean /= static_cast<double>(targets.size());
  double var = 0.0;
  for (const double t : targets) var += (t - mean) * (t - mean);
  const double stddev = std::sqrt(var / static_cast<double>(targets.size()));

  Outcome o;
  o.ok = mae < 0.05 * stddev;
  o.detail = "train mae " + fmt(mae) + " vs 5% of target std " + fmt(0.05 * stddev);
  return o;
}

// ---- 5: heterogeneity benefit -------------------------------------------------

double run_final_mae(harness::ExperimentConfig cfg) {
  const fed::PreparedData pd = harness::prepare_data(cfg);
  const fed::RunSpec spec = harness::spec_from(cfg, 1);
  const fed::RunResult res = fed::run_rounds(spec, pd);
  if (!res.has_final) throw fedldr::TrainingError("no completed round");
  return res.final_test.mae;
}

Outcome criterion_heterogeneity() {
  harness::ExperimentConfig base;
  base.nodes = 16;
  base.steps = 240;
  base.noise = 0.05;
  base.offset_scale = 4.0;  // strongly node-specific level shifts
  base.clients = 4;
  base.rounds = 30;
  base.local_epochs = 2;
  base.batch_size = 32;
  base.learning_rate = 0.005;
  base.history = 12;
  base.horizon = 3;
  base.embed_dim = 6;
  base.embed_dim_g = 6;
  base.hidden = 16;
  base.layers = 2;

  std::vector<double> ldr, avg;
  for (const std::uint64_t seed : {11ull, 12ull, 13ull}) {
    harness::ExperimentConfig cfg = base;
    cfg.seed = seed;
    cfg.strategy = fed::StrategyKind::FED_LDR;
    ldr.push_back(run_final_mae(cfg));
    cfg.strategy = fed::StrategyKind::FEDAVG;
    avg.push_back(run_final_mae(cfg));
  }
  std::sort(ldr.begin(), ldr.end());
  std::sort(avg.begin(), avg.end());
  const double med_ldr = ldr[1], med_avg = avg[1];

  Outcome o;
  o.ok = med_ldr < 0.8 * med_avg;
  o.detail = "median test mae " + fmt(med_ldr) + " (adaptive) vs " + fmt(med_avg) +
             " (uniform baseline), need 20% gap";
  return o;
}

// ---- 6: robust aggregation ----------------------------------------------------

Outcome criterion_robustness() {
  Arch a;
  a.history = 4;
  a.horizon = 2;
  a.hidden = 6;
  a.layers = 2;
  a.embed_dim = 4;
  a.embed_dim_g = 4;

  const auto [raw, truth] = data::generate_synthetic(10, 80, 6001, 0.05);
  (void)truth;
  const auto parts = data::split_temporal(raw, a.history + a.horizon);
  const auto stats = data::fit_normalizer(parts[0]);
  const auto windows = data::make_windows(data::normalize(parts[0], stats), a.history, a.horizon);
  const auto partition = data::partition_nodes(10, 5);

  const Model global = SharedParams::init(a, 6002);
  train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.mu = 0.0;
  cfg.batch_size = 32;
  cfg.seed = 6003;

  auto slice_rows = [](const data::WindowSample& w, std::size_t lo, std::size_t hi) {
    data::WindowSample out;
    out.origin = w.origin;
    out.input = Tensor({hi - lo, w.input.extent(1)});
    out.target = Tensor({hi - lo, w.target.extent(1)});
    for (std::size_t r = lo; r < hi; ++r) {
      for (std::size_t c = 0; c < w.input.extent(1); ++c) out.input(r - lo, c) = w.input(r, c);
      for (std::size_t c = 0; c < w.target.extent(1); ++c) out.target(r - lo, c) = w.target(r, c);
    }
    return out;
  };

  std::vector<fed::ClientUpdate> updates;
  for (std::size_t k = 0; k < 5; ++k) {
    const auto [lo, hi] = partition.ranges[k];
    std::vector<data::WindowSample> local;
    for (const auto& w : windows) local.push_back(slice_rows(w, lo, hi));
    train::TrainConfig ck = cfg;
    ck.seed = fedldr::num::derive_seed(cfg.seed, 1, k);
    auto res = train::local_train(local, global, ck);
    updates.push_back({k, lo, hi, std::move(res.params), res.stats.n_k});
  }

  const auto clean_med = gcn::pack(fed::aggregate_fedmedian(updates));
  const auto clean_avg = gcn::pack(fed::aggregate_fedavg(updates));

  Rng noise(6004);
  auto corrupted = updates;
  for (Tensor* b : gcn::blocks(corrupted[2].params))
    for (double& v : b->data()) v += 1e6 * noise.normal();

  const auto corr_med = gcn::pack(fed::aggregate_fedmedian(corrupted));
  const auto corr_avg = gcn::pack(fed::aggregate_fedavg(corrupted));

  const double med_disp = l2(clean_med, corr_med);
  const double avg_disp = l2(clean_avg, corr_avg);
  const double norm = l2(clean_med);

  Outcome o;
  o.ok = med_disp < 0.01 * norm && avg_disp > 100.0 * std::max(med_disp, 1e-30);
  o.detail = "median moved " + fmt(med_disp) + " (norm " + fmt(norm) + "), mean moved " +
             fmt(avg_disp);
  return o;
}

// ---- 7: fixed point and determinism --------------------------------------------

Outcome criterion_determinism() {
  Arch a;
  a.history = 2;
  a.horizon = 1;
  a.hidden = 3;
  a.layers = 2;
  a.embed_dim = 2;
  a.embed_dim_g = 2;

  // Echoing the broadcast back must leave every strategy's global unchanged.
  double worst = 0.0;
  for (const fed::StrategyKind kind : fed::all_strategies) {
    fed::GlobalState g;
    const auto partition = data::partition_nodes(4, 2);
    g.model = fed::uses_ldigc_model(kind) ? Model(ModelParams::init(a, 4, 7001))
                                          : Model(SharedParams::init(a, 7001));
    const auto before = gcn::pack(g.model);
    std::vector<fed::ClientUpdate> updates;
    if (fed::uses_ldigc_model(kind)) {
      for (const auto& v : fed::broadcast(g, partition))
        updates.push_back({v.client_id, v.lo, v.hi, v.params, 5});
    } else {
      for (std::size_t k = 0; k < 2; ++k)
        updates.push_back({k, partition.ranges[k].lo, partition.ranges[k].hi, g.model, 5});
    }
    fed::apply_strategy(g, updates, kind);
    const auto after = gcn::pack(g.model);
    for (std::size_t i = 0; i < after.size(); ++i)
      worst = std::max(worst, std::abs(after[i] - before[i]));
  }

  // Two identical runs must emit byte-identical metrics.
  const auto out_a = work_dir() / "det_a";
  const auto out_b = work_dir() / "det_b";
  const std::string body =
      "nodes = 6\nsteps = 80\nclients = 2\nrounds = 2\nlocal_epochs = 1\nbatch_size = 16\n"
      "history = 4\nhorizon = 2\nembed_dim = 4\nembed_dim_g = 4\nhidden = 6\nlayers = 2\n"
      "seed = 7\n";
  const auto cfg_a = write_file("det_a.cfg", body + "out_dir = " + out_a.string() + "\n");
  const auto cfg_b = write_file("det_b.cfg", body + "out_dir = " + out_b.string() + "\n");
  const int rc_a = harness::run_experiment(cfg_a.string());
  const int rc_b = harness::run_experiment(cfg_b.string());
  const bool identical = rc_a == 0 && rc_b == 0 &&
                         slurp(out_a / "metrics.csv") == slurp(out_b / "metrics.csv");

  Outcome o;
  o.ok = worst < 1e-9 && identical;
  o.detail = "fixed-point drift " + fmt(worst) + ", reruns " +
             (identical ? "byte-identical" : "DIFFER");
  return o;
}

// ---- 8: sweeps ------------------------------------------------------------------

bool sweep_csv_ok(const fs::path& p, std::size_t rows) {
  const auto lines = split(slurp(p), '\n');
  if (lines.size() < rows + 1 || lines[0] != "value,mae,rmse,mape,corr,status") return false;
  for (std::size_t i = 1; i <= rows; ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 6 || f[5] != "ok") return false;
    for (std::size_t j = 1; j <= 4; ++j)
      if (!std::isfinite(std::stod(f[j]))) return false;
  }
  return true;
}

Outcome criterion_sweeps() {
  const auto out = work_dir() / "sweeps";
  const auto cfg = write_file("sweep.cfg",
                              "nodes = 8\nsteps = 120\nclients = 2\nrounds = 3\n"
                              "local_epochs = 1\nbatch_size = 32\nhistory = 6\nhorizon = 2\n"
                              "embed_dim = 4\nembed_dim_g = 4\nhidden = 8\nlayers = 2\n"
                              "seed = 9\nout_dir = " + out.string() + "\n");
  const int rc_e = harness::run_sweep(cfg.string(), "local_epochs", {1, 2, 4, 8, 16});
  const int rc_c = harness::run_sweep(cfg.string(), "clients", {2, 4, 8});

  const bool epochs_ok = rc_e == 0 && sweep_csv_ok(out / "sweep_local_epochs.csv", 5);
  const bool clients_ok = rc_c == 0 && sweep_csv_ok(out / "sweep_clients.csv", 3);

  Outcome o;
  o.ok = epochs_ok && clients_ok;
  o.detail = std::string("epoch sweep ") + (epochs_ok ? "ok" : "BAD") + ", client sweep " +
             (clients_ok ? "ok" : "BAD");
  return o;
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0 means no stated budget
  Outcome (*run)();
};

}  // namespace

int main() {
  const Criterion table[] = {
      {"gradient correctness", 30, criterion_gradients},
      {"adjacency contract", 0, criterion_adjacency},
      {"oracle equivalence", 10, criterion_oracles},
      {"memorization capacity", 120, criterion_memorization},
      {"heterogeneity benefit", 600, criterion_heterogeneity},
      {"robust aggregation", 60, criterion_robustness},
      {"fixed point and determinism", 60, criterion_determinism},
      {"sweep harness", 900, criterion_sweeps},
  };

  int failures = 0;
  int index = 0;
  for (const Criterion& c : table) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = c.budget_seconds == 0 || secs < c.budget_seconds;
    const bool pass = o.ok && in_budget;
    if (!pass) ++failures;
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << index << ": " << c.name << " ("
              << o.detail << ", " << fmt(secs) << "s";
    if (!in_budget) std::cout << ", OVER BUDGET " << fmt(c.budget_seconds) << "s";
    std::cout << ")\n";
  }
  if (failures == 0)
    std::cout << "all criteria passed\n";
  else
    std::cout << failures << " criterion(s) failed\n";
  return failures;
}
