#pragma once

#include <stdexcept>
#include <string>

namespace hdbekk {

// Error classes. The CLI maps each one onto its own exit code.

// Invalid or unresolvable run configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or insufficient input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: eigensolver failure, singular covariance, degenerate fit.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace detail
}  // namespace hdbekk
