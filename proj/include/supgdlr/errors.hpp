#pragma once

#include <stdexcept>
#include <string>

namespace supgdlr {

/// Shape/size mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Bad user-facing configuration (violated admissibility, unknown keys, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A factor matrix (or Gram matrix derived from it) is numerically rank
/// deficient beyond the configured threshold.
struct RankDegeneracy : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear-solver breakdown, non-convergence, NaN propagation.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A checked model assumption does not hold for the supplied data.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace supgdlr
