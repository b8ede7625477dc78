// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace optformer {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension contract violated (mismatched operands, bad rank).
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad configuration, unknown keys, out-of-range ids, usage problems.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Caller broke an operation contract (aux/variant mismatch, non-symmetric
// input where symmetry is required, identical source/target corpus, ...).
struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf or detected divergence inside numerical code.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// A dense diagnostic was requested above its size guard.
struct SizeGuardError : Error {
  explicit SizeGuardError(const std::string& msg) : Error(msg) {}
};

}  // namespace optformer
