#pragma once

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fedldr/config.hpp"
#include "fedldr/data.hpp"
#include "fedldr/federation.hpp"
#include "fedldr/serialize.hpp"
#include "fedldr/trainer.hpp"
#include "fedldr/util.hpp"

namespace fedldr::harness {

namespace fs = std::filesystem;

inline constexpr const char* kOutRootEnv = "FEDLDR_OUT_ROOT";

/// Output directory after applying the environment override: a relative
/// out_dir lands under $FEDLDR_OUT_ROOT when that is set.
inline fs::path resolve_out_dir(const ExperimentConfig& c) {
  fs::path p = c.out_dir;
  if (const char* root = std::getenv(kOutRootEnv); root != nullptr && *root != '\0' && p.is_relative())
    p = fs::path(root) / p;
  return p;
}

inline gcn::Arch arch_from(const ExperimentConfig& c, std::size_t n_features) {
  gcn::Arch a;
  a.history = c.history;
  a.horizon = c.horizon;
  a.f_in = n_features;
  a.f_out = n_features;
  a.hidden = c.hidden;
  a.layers = c.layers;
  a.embed_dim = c.embed_dim;
  a.embed_dim_g = c.embed_dim_g;
  return a;
}

inline fed::RunSpec spec_from(const ExperimentConfig& c, std::size_t n_features) {
  fed::RunSpec s;
  s.strategy = c.strategy;
  s.arch = arch_from(c, n_features);
  s.clients = c.clients;
  s.rounds = c.rounds;
  s.rho = c.rho;
  s.server_lr = c.server_lr;
  s.train.learning_rate = c.learning_rate;
  s.train.mu = c.mu;
  s.train.epochs = c.local_epochs;
  s.train.batch_size = c.batch_size;
  s.train.clip_norm = c.clip_norm;
  s.seed = c.seed;
  s.min_improvement = c.min_improvement;
  s.max_stall_rounds = c.max_stall_rounds;
  return s;
}

/// Seed tag for dataset generation. Round seeds use (round, client) pairs
/// with round >= 1 and client < 2^16 - 2, so the tags below cannot collide.
inline std::uint64_t data_seed(std::uint64_t master) { return num::derive_seed(master, 0xFFFEu, 0u); }

/// Loads or generates the dataset, then splits, normalizes, windows, and
/// partitions it into the form run_rounds consumes.
inline fed::PreparedData prepare_data(const ExperimentConfig& c) {
  data::TimeSeriesDataset ds;
  if (c.dataset == "csv") {
    ds = data::load_csv(c.csv_path);
  } else {
    ds = data::generate_synthetic(c.nodes, c.steps, data_seed(c.seed), c.noise, c.offset_scale)
             .first;
  }
  if (c.clients > ds.n_nodes())
    throw ConfigError("config key 'clients': " + std::to_string(c.clients) + " clients for " +
                      std::to_string(ds.n_nodes()) + " nodes");

  const std::size_t span = c.history + c.horizon;
  const auto segments = data::split_temporal(ds, span);
  const data::NormStats stats = data::fit_normalizer(segments[0]);

  fed::PreparedData pd;
  pd.stats = stats;
  const std::size_t n_train = segments[0].steps(), n_val = segments[1].steps();
  pd.train = data::make_windows(data::normalize(segments[0], stats), c.history, c.horizon, 0);
  pd.val = data::make_windows(data::normalize(segments[1], stats), c.history, c.horizon, n_train);
  pd.test =
      data::make_windows(data::normalize(segments[2], stats), c.history, c.horizon, n_train + n_val);
  pd.partition = data::partition_nodes(ds.n_nodes(), c.clients);
  return pd;
}

namespace detail {

inline std::string metric_row(long round, const std::string& strategy, const char* split,
                              const metrics::MetricReport& m, double mean_loss,
                              std::size_t bytes_up, std::size_t bytes_down) {
  std::string row = std::to_string(round) + ',' + strategy + ',' + split + ',';
  row += util::format_double(m.mae) + ',' + util::format_double(m.rmse) + ',';
  row += util::format_double(m.mape) + ',' + util::format_double(m.corr) + ',';
  row += util::format_double(mean_loss) + ',';
  row += std::to_string(bytes_up) + ',' + std::to_string(bytes_down) + ',';
  // Wall-clock would break byte-identical reruns; timings go to run.log.
  row += "0";
  return row;
}

inline void write_metrics_csv(const fed::RunResult& result, const std::string& strategy,
                              const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot write " + path.string());
  os << "round,strategy,split,mae,rmse,mape,corr,mean_train_loss,bytes_up,bytes_down,seconds\n";
  for (const fed::RoundReport& r : result.rounds) {
    os << metric_row(r.round, strategy, "train", r.train, r.mean_client_loss, r.bytes_up,
                     r.bytes_down)
       << '\n';
    os << metric_row(r.round, strategy, "val", r.val, r.mean_client_loss, r.bytes_up, r.bytes_down)
       << '\n';
    os << metric_row(r.round, strategy, "test", r.test, r.mean_client_loss, r.bytes_up,
                     r.bytes_down)
       << '\n';
  }
  if (!os) throw ParseError("write failed: " + path.string());
}

inline void write_run_log(const fed::RunResult& result, const ExperimentConfig& c,
                          const fs::path& path) {
  std::ofstream os(path);
  os << "strategy " << fed::to_string(c.strategy) << ", seed " << c.seed << ", " << c.clients
     << " clients\n";
  for (const fed::RoundReport& r : result.rounds)
    os << "round " << r.round << ": val_mae " << util::format_fixed(r.val.mae) << ", test_mae "
       << util::format_fixed(r.test.mae) << ", loss " << util::format_fixed(r.mean_client_loss)
       << ", " << util::format_fixed(r.seconds) << "s\n";
  if (result.has_final)
    os << "best round " << result.best_round << ": test_mae "
       << util::format_fixed(result.final_test.mae) << ", test_rmse "
       << util::format_fixed(result.final_test.rmse) << "\n";
  os << "bytes up " << result.total_bytes_up << ", down " << result.total_bytes_down << "\n";
}

}  // namespace detail

/// Runs one experiment and writes metrics.csv, config.resolved, run.log, and
/// the best-round checkpoint into the resolved output directory.
inline fed::RunResult run_one(const ExperimentConfig& cfg) {
  validate(cfg);
  const fs::path out = resolve_out_dir(cfg);
  fs::create_directories(out);

  const fed::PreparedData pd = prepare_data(cfg);
  const std::size_t n_features = pd.train.front().input.extent(1) / cfg.history;
  const fed::RunSpec spec = spec_from(cfg, n_features);
  fed::RunResult result = fed::run_rounds(spec, pd);

  write_resolved(cfg, (out / "config.resolved").string());
  detail::write_metrics_csv(result, fed::to_string(cfg.strategy), out / "metrics.csv");
  detail::write_run_log(result, cfg, out / "run.log");
  if (cfg.strategy == fed::StrategyKind::LOCAL_ONLY) {
    for (std::size_t k = 0; k < result.local_models.size(); ++k)
      gcn::save_checkpoint(result.local_models[k],
                           (out / ("checkpoint_client" + std::to_string(k) + ".bin")).string());
  } else {
    gcn::save_checkpoint(result.global, (out / "checkpoint.bin").string());
  }
  return result;
}

/// CLI verb `run`: 0 on success, 2 on configuration problems, 1 on runtime
/// failure.
inline int run_experiment(const std::string& config_path) {
  try {
    const ExperimentConfig cfg = parse_config(config_path);
    const fed::RunResult result = run_one(cfg);
    if (result.has_final)
      std::cout << "best round " << result.best_round << ": test mae "
                << util::format_fixed(result.final_test.mae) << ", rmse "
                << util::format_fixed(result.final_test.rmse) << ", mape "
                << util::format_fixed(result.final_test.mape) << ", corr "
                << util::format_fixed(result.final_test.corr) << '\n';
    std::cout << "artifacts in " << resolve_out_dir(cfg).string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

struct ChildOutcome {
  std::string label;
  bool ok = false;
  metrics::MetricReport final_test;
  std::size_t bytes_up = 0, bytes_down = 0;
  std::string error;
};

namespace detail {

/// Runs one child experiment in its own subdirectory, capturing failure
/// instead of propagating it so sibling rows stay intact.
inline ChildOutcome run_child(ExperimentConfig cfg, const fs::path& subdir,
                              const std::string& label) {
  ChildOutcome row;
  row.label = label;
  cfg.out_dir = subdir.string();
  try {
    validate(cfg);
    const fed::RunResult result = run_one(cfg);
    if (!result.has_final) throw TrainingError("no rounds completed");
    row.ok = true;
    row.final_test = result.final_test;
    row.bytes_up = result.total_bytes_up;
    row.bytes_down = result.total_bytes_down;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

}  // namespace detail

/// CLI verb `sweep`: one child run per value of local_epochs or clients,
/// same seed throughout; failures mark their row and the sweep continues.
inline int run_sweep(const std::string& config_path, const std::string& param,
                     const std::vector<std::uint64_t>& values) {
  try {
    if (param != "local_epochs" && param != "clients")
      throw ConfigError("sweep parameter must be 'local_epochs' or 'clients', got '" + param + "'");
    if (values.empty()) throw ConfigError("sweep: no values given");
    const ExperimentConfig base = parse_config(config_path);
    const fs::path out = resolve_out_dir(base);
    fs::create_directories(out);

    std::vector<ChildOutcome> rows;
    for (const std::uint64_t v : values) {
      ExperimentConfig cfg = base;
      if (param == "local_epochs")
        cfg.local_epochs = v;
      else
        cfg.clients = v;
      const fs::path subdir = out / ("sweep_" + param) / ("value_" + std::to_string(v));
      rows.push_back(detail::run_child(std::move(cfg), subdir, std::to_string(v)));
      std::cout << param << " = " << v << ": "
                << (rows.back().ok ? "test mae " + util::format_fixed(rows.back().final_test.mae)
                                   : "failed: " + rows.back().error)
                << '\n';
    }

    const fs::path csv = out / ("sweep_" + param + ".csv");
    std::ofstream os(csv);
    os << "value,mae,rmse,mape,corr,status\n";
    for (const ChildOutcome& r : rows) {
      if (r.ok)
        os << r.label << ',' << util::format_double(r.final_test.mae) << ','
           << util::format_double(r.final_test.rmse) << ','
           << util::format_double(r.final_test.mape) << ','
           << util::format_double(r.final_test.corr) << ",ok\n";
      else
        os << r.label << ",,,,,failed\n";
    }
    std::cout << "wrote " << csv.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

/// CLI verb `compare`: identical data and seed across strategies, one row of
/// final test metrics per strategy.
inline int run_compare(const std::string& config_path, const std::vector<std::string>& strategies) {
  try {
    if (strategies.empty()) throw ConfigError("compare: no strategies given");
    std::vector<fed::StrategyKind> kinds;
    for (const std::string& s : strategies) kinds.push_back(fed::parse_strategy(s));
    const ExperimentConfig base = parse_config(config_path);
    const fs::path out = resolve_out_dir(base);
    fs::create_directories(out);

    std::vector<ChildOutcome> rows;
    for (const fed::StrategyKind kind : kinds) {
      ExperimentConfig cfg = base;
      cfg.strategy = kind;
      const fs::path subdir = out / "compare" / fed::to_string(kind);
      rows.push_back(detail::run_child(std::move(cfg), subdir, fed::to_string(kind)));
      std::cout << fed::to_string(kind) << ": "
                << (rows.back().ok ? "test mae " + util::format_fixed(rows.back().final_test.mae)
                                   : "failed: " + rows.back().error)
                << '\n';
    }

    const fs::path csv = out / "compare.csv";
    std::ofstream os(csv);
    os << "strategy,seed,mae,rmse,mape,corr,bytes_up,bytes_down,status\n";
    for (const ChildOutcome& r : rows) {
      if (r.ok)
        os << r.label << ',' << base.seed << ',' << util::format_double(r.final_test.mae) << ','
           << util::format_double(r.final_test.rmse) << ','
           << util::format_double(r.final_test.mape) << ','
           << util::format_double(r.final_test.corr) << ',' << r.bytes_up << ',' << r.bytes_down
           << ",ok\n";
      else
        os << r.label << ',' << base.seed << ",,,,,,,failed\n";
    }
    std::cout << "wrote " << csv.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

/// CLI verb `gen-data`: materializes the synthetic series as CSV; the hidden
/// mixing graph goes to a second file when requested.
inline int run_gen_data(const std::string& config_path, const std::string& out_path,
                        const std::string& truth_path = "") {
  try {
    const ExperimentConfig cfg = parse_config(config_path);
    if (cfg.dataset != "synthetic")
      throw ConfigError("gen-data: config must have dataset = synthetic");
    auto [ds, truth] =
        data::generate_synthetic(cfg.nodes, cfg.steps, data_seed(cfg.seed), cfg.noise,
                                 cfg.offset_scale);
    data::save_csv(ds, out_path);
    std::cout << "wrote " << out_path << " (" << ds.steps() << " steps, " << ds.n_nodes()
              << " nodes)\n";
    if (!truth_path.empty()) {
      std::ofstream os(truth_path);
      for (std::size_t j = 0; j < cfg.nodes; ++j) os << (j ? "," : "") << "node_" << j;
      os << '\n';
      for (std::size_t i = 0; i < cfg.nodes; ++i) {
        for (std::size_t j = 0; j < cfg.nodes; ++j)
          os << (j ? "," : "") << util::format_double(truth.w(i, j));
        os << '\n';
      }
      std::cout << "wrote " << truth_path << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

/// CLI verb `grad-check`: finite-difference verification of the tape
/// gradients on one window of the configured problem. Exits 0 when the worst
/// relative error stays under 1e-4.
inline int run_grad_check(const std::string& config_path) {
  try {
    const ExperimentConfig cfg = parse_config(config_path);
    const fed::PreparedData pd = prepare_data(cfg);
    const std::size_t n_features = pd.train.front().input.extent(1) / cfg.history;
    const gcn::Arch arch = arch_from(cfg, n_features);
    const std::size_t n = pd.train.front().input.extent(0);

    const auto p = gcn::ModelParams::init(arch, n, num::derive_seed(cfg.seed, 0xFFFDu, 0u));
    auto anchor = gcn::ModelParams::init(arch, n, num::derive_seed(cfg.seed, 0xFFFCu, 0u));
    const double mu = cfg.mu > 0.0 ? cfg.mu : 0.01;
    const double err = train::grad_check(p, pd.train.front(), 1e-5, mu, &anchor);
    std::cout << "max relative gradient error: " << util::format_double(err) << '\n';
    return err < 1e-4 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fedldr::harness
