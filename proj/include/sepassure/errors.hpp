#pragma once

#include <stdexcept>
#include <string>

namespace sepassure {

// Shape or dimension disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value (unknown case id, heads not dividing d, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller broke a precondition of an operation.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// NaN or Inf produced or consumed.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sepassure
