#pragma once

#include <stdexcept>
#include <string>

namespace nosaf {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands (reports both shapes).
struct DimensionError : Error {
  using Error::Error;
};

// A value outside its documented domain (bad ratio, empty mask, ...).
struct ArgumentError : Error {
  using Error::Error;
};

// Well-formed input that is semantically wrong (label out of range, ...).
struct DataError : Error {
  using Error::Error;
};

// Malformed file content; message carries file and line where known.
struct ParseError : Error {
  using Error::Error;
};

// Cross-field / cross-file inconsistency (duplicate edge, shape mismatch
// between a checkpoint and its config, ...).
struct IntegrityError : Error {
  using Error::Error;
};

// Command-line misuse; the CLI maps this to exit code 2.
struct UsageError : Error {
  using Error::Error;
};

// Training aborted (divergence); message names the epoch.
struct TrainError : Error {
  using Error::Error;
};

}  // namespace nosaf
