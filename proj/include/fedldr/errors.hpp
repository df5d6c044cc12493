#pragma once

#include <stdexcept>
#include <string>

namespace fedldr {

/// Shape or extent disagreement between operands.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// A caller violated an API precondition (empty input, non-scalar loss, ...).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// Optimization produced a non-finite quantity or otherwise cannot continue.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file; the message carries the location.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A metric is undefined on the given input (zero variance, all masked, ...).
/// Server-side aggregation failures (non-finite pseudo-gradients, malformed
/// update sets).
class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedldr
