#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <string_view>

#include "fedldr/strategy.hpp"
#include "fedldr/util.hpp"

namespace fedldr::harness {

/// Everything an experiment needs, with every default materialized. The file
/// form is flat `key = value` lines; '#' starts a comment. parse_config and
/// write_resolved are exact inverses, so a resolved file re-runs identically.
struct ExperimentConfig {
  std::string dataset = "synthetic";  // "synthetic" or "csv"
  std::string csv_path;               // required when dataset = csv

  // synthetic generator
  std::uint64_t nodes = 8;
  std::uint64_t steps = 240;
  double noise = 0.05;
  double offset_scale = 1.0;

  // federation
  fed::StrategyKind strategy = fed::StrategyKind::FED_LDR;
  std::uint64_t clients = 2;
  std::uint64_t rounds = 50;
  std::uint64_t max_stall_rounds = 5;
  double min_improvement = 1e-4;
  double rho = 0.5;
  double server_lr = 0.01;

  // local training
  std::uint64_t local_epochs = 2;
  std::uint64_t batch_size = 32;
  double learning_rate = 0.003;
  double mu = 0.01;
  double clip_norm = 5.0;

  // architecture
  std::uint64_t history = 12;
  std::uint64_t horizon = 12;
  std::uint64_t embed_dim = 10;
  std::uint64_t embed_dim_g = 10;
  std::uint64_t hidden = 32;
  std::uint64_t layers = 2;

  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

namespace detail {

inline std::uint64_t parse_u64(std::string_view v, const std::string& key) {
  const long n = util::parse_long(v, "config key '" + key + "'");
  if (n < 0) throw ConfigError("config key '" + key + "': must be non-negative");
  return static_cast<std::uint64_t>(n);
}

inline void apply_key(ExperimentConfig& c, const std::string& key, std::string_view value) {
  const std::string where = "config key '" + key + "'";
  if (key == "dataset") {
    c.dataset = std::string(value);
    if (c.dataset != "synthetic" && c.dataset != "csv")
      throw ConfigError(where + ": expected 'synthetic' or 'csv', got '" + c.dataset + "'");
  } else if (key == "csv_path") c.csv_path = std::string(value);
  else if (key == "nodes") c.nodes = parse_u64(value, key);
  else if (key == "steps") c.steps = parse_u64(value, key);
  else if (key == "noise") c.noise = util::parse_double(value, where);
  else if (key == "offset_scale") c.offset_scale = util::parse_double(value, where);
  else if (key == "strategy") c.strategy = fed::parse_strategy(value);
  else if (key == "clients") c.clients = parse_u64(value, key);
  else if (key == "rounds") c.rounds = parse_u64(value, key);
  else if (key == "max_stall_rounds") c.max_stall_rounds = parse_u64(value, key);
  else if (key == "min_improvement") c.min_improvement = util::parse_double(value, where);
  else if (key == "rho") c.rho = util::parse_double(value, where);
  else if (key == "server_lr") c.server_lr = util::parse_double(value, where);
  else if (key == "local_epochs") c.local_epochs = parse_u64(value, key);
  else if (key == "batch_size") c.batch_size = parse_u64(value, key);
  else if (key == "learning_rate") c.learning_rate = util::parse_double(value, where);
  else if (key == "mu") c.mu = util::parse_double(value, where);
  else if (key == "clip_norm") c.clip_norm = util::parse_double(value, where);
  else if (key == "history") c.history = parse_u64(value, key);
  else if (key == "horizon") c.horizon = parse_u64(value, key);
  else if (key == "embed_dim") c.embed_dim = parse_u64(value, key);
  else if (key == "embed_dim_g") c.embed_dim_g = parse_u64(value, key);
  else if (key == "hidden") c.hidden = parse_u64(value, key);
  else if (key == "layers") c.layers = parse_u64(value, key);
  else if (key == "seed") c.seed = parse_u64(value, key);
  else if (key == "out_dir") c.out_dir = std::string(value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace detail

/// Field-level validation beyond per-key parsing; throws ConfigError naming
/// the offending field.
inline void validate(const ExperimentConfig& c) {
  auto positive = [](std::uint64_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("config key '") + name + "': must be >= 1");
  };
  auto positive_d = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("config key '") + name + "': must be > 0");
  };
  if (c.dataset == "csv" && c.csv_path.empty())
    throw ConfigError("config key 'csv_path': required when dataset = csv");
  if (c.dataset == "synthetic" && c.nodes < 2)
    throw ConfigError("config key 'nodes': synthetic generator needs >= 2");
  positive(c.steps, "steps");
  positive(c.clients, "clients");
  positive(c.local_epochs, "local_epochs");
  positive(c.batch_size, "batch_size");
  positive(c.history, "history");
  positive(c.horizon, "horizon");
  positive(c.embed_dim, "embed_dim");
  positive(c.embed_dim_g, "embed_dim_g");
  positive(c.hidden, "hidden");
  positive(c.layers, "layers");
  positive_d(c.learning_rate, "learning_rate");
  positive_d(c.server_lr, "server_lr");
  positive_d(c.clip_norm, "clip_norm");
  if (c.mu < 0.0) throw ConfigError("config key 'mu': must be >= 0");
  if (c.noise < 0.0) throw ConfigError("config key 'noise': must be >= 0");
  if (c.rho < 0.0 || c.rho > 1.0) throw ConfigError("config key 'rho': must be in [0, 1]");
  if (c.min_improvement < 0.0)
    throw ConfigError("config key 'min_improvement': must be >= 0");
  if (c.out_dir.empty()) throw ConfigError("config key 'out_dir': must not be empty");
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open: " + path);
  ExperimentConfig c;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view v = util::trim(line);
    if (v.empty() || v.front() == '#') continue;
    const std::size_t eq = v.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    const std::string key{util::trim(v.substr(0, eq))};
    const std::string_view value = util::trim(v.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("config: line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    try {
      detail::apply_key(c, key, value);
    } catch (const ParseError& e) {
      // A malformed value is a configuration problem, not a data problem.
      throw ConfigError(e.what());
    }
  }
  validate(c);
  return c;
}

/// Writes every key in a fixed order. Doubles use shortest-round-trip form,
/// so parse_config(write_resolved(c)) == c exactly.
inline void write_resolved(const ExperimentConfig& c, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("config: cannot write: " + path);
  os << "dataset = " << c.dataset << '\n';
  if (!c.csv_path.empty()) os << "csv_path = " << c.csv_path << '\n';
  os << "nodes = " << c.nodes << '\n';
  os << "steps = " << c.steps << '\n';
  os << "noise = " << util::format_double(c.noise) << '\n';
  os << "offset_scale = " << util::format_double(c.offset_scale) << '\n';
  os << "strategy = " << fed::to_string(c.strategy) << '\n';
  os << "clients = " << c.clients << '\n';
  os << "rounds = " << c.rounds << '\n';
  os << "max_stall_rounds = " << c.max_stall_rounds << '\n';
  os << "min_improvement = " << util::format_double(c.min_improvement) << '\n';
  os << "rho = " << util::format_double(c.rho) << '\n';
  os << "server_lr = " << util::format_double(c.server_lr) << '\n';
  os << "local_epochs = " << c.local_epochs << '\n';
  os << "batch_size = " << c.batch_size << '\n';
  os << "learning_rate = " << util::format_double(c.learning_rate) << '\n';
  os << "mu = " << util::format_double(c.mu) << '\n';
  os << "clip_norm = " << util::format_double(c.clip_norm) << '\n';
  os << "history = " << c.history << '\n';
  os << "horizon = " << c.horizon << '\n';
  os << "embed_dim = " << c.embed_dim << '\n';
  os << "embed_dim_g = " << c.embed_dim_g << '\n';
  os << "hidden = " << c.hidden << '\n';
  os << "layers = " << c.layers << '\n';
  os << "seed = " << c.seed << '\n';
  os << "out_dir = " << c.out_dir << '\n';
  if (!os) throw ConfigError("config: write failed: " + path);
}

}  // namespace fedldr::harness
