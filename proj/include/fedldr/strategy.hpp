#pragma once

#include <array>
#include <string>
#include <string_view>

#include "fedldr/errors.hpp"

namespace fedldr::fed {

/// Aggregation strategies. FED_LDR is the full protocol; FEDAVG/FEDMEDIAN/
/// FEDOPT are the plain baselines on the ablation model; the *_LDR hybrids
/// run the adaptive model under a baseline aggregator; LOCAL_ONLY never
/// aggregates.
enum class StrategyKind {
  FED_LDR,
  FEDAVG,
  FEDMEDIAN,
  FEDOPT,
  FEDAVG_LDR,
  FEDMEDIAN_LDR,
  FEDOPT_LDR,
  LOCAL_ONLY,
};

inline constexpr std::array<StrategyKind, 8> all_strategies{
    StrategyKind::FED_LDR,    StrategyKind::FEDAVG,        StrategyKind::FEDMEDIAN,
    StrategyKind::FEDOPT,     StrategyKind::FEDAVG_LDR,    StrategyKind::FEDMEDIAN_LDR,
    StrategyKind::FEDOPT_LDR, StrategyKind::LOCAL_ONLY,
};

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::FED_LDR: return "FED_LDR";
    case StrategyKind::FEDAVG: return "FEDAVG";
    case StrategyKind::FEDMEDIAN: return "FEDMEDIAN";
    case StrategyKind::FEDOPT: return "FEDOPT";
    case StrategyKind::FEDAVG_LDR: return "FEDAVG_LDR";
    case StrategyKind::FEDMEDIAN_LDR: return "FEDMEDIAN_LDR";
    case StrategyKind::FEDOPT_LDR: return "FEDOPT_LDR";
    case StrategyKind::LOCAL_ONLY: return "LOCAL_ONLY";
  }
  throw ContractError("to_string: unknown strategy");
}

inline StrategyKind parse_strategy(std::string_view s) {
  for (const StrategyKind k : all_strategies)
    if (s == to_string(k)) return k;
  throw ConfigError("strategy: unknown value '" + std::string(s) +
                    "' (expected FED_LDR, FEDAVG, FEDMEDIAN, FEDOPT, FEDAVG_LDR, "
                    "FEDMEDIAN_LDR, FEDOPT_LDR, or LOCAL_ONLY)");
}

/// Whether the strategy trains the adaptive-adjacency factorized model; the
/// plain baselines run the shared-weight uniform-adjacency ablation.
inline bool uses_ldigc_model(StrategyKind k) {
  switch (k) {
    case StrategyKind::FEDAVG:
    case StrategyKind::FEDMEDIAN:
    case StrategyKind::FEDOPT: return false;
    default: return true;
  }
}

/// The proximal pull toward broadcast embeddings is part of the full
/// protocol only; baselines and hybrids train unanchored.
inline bool uses_proximal(StrategyKind k) { return k == StrategyKind::FED_LDR; }

}  // namespace fedldr::fed
