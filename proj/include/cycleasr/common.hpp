#pragma once

#include <stdexcept>
#include <string>

namespace cycleasr {

// Scalar type used for all tensor storage. Double by default so gradient
// checks and the serialized checkpoint values are exact; configure the build
// with CYCLEASR_REAL_FLOAT for a faster single-precision variant.
#ifdef CYCLEASR_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

// Operand shapes do not conform to an operation's signature.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller passed data that violates an operation's preconditions.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value (rates, sizes, unknown keys/ids).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An object was used outside its legal lifecycle (e.g. a consumed tape).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed file contents.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required (gradient diagnostics).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cycleasr
