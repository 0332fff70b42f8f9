#pragma once

#include <stdexcept>

namespace xfer {

// Error taxonomy shared across the library. Everything derives from
// std::runtime_error so callers can catch coarsely while tests can catch the
// precise type.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StratificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateClassError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptCheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IncompatibleArchitectureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace xfer
