#pragma once

#include <stdexcept>
#include <string>

namespace gca {

// Base class for everything thrown on purpose. The CLI maps the three
// subclasses onto distinct exit codes, so pick the subclass by what the
// caller can do about it: fix flags/config, fix data, or rerun/reseed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, bad config values, API misuse (shape mismatches included).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable/malformed/degenerate input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: non-finite values, divergence, unstable simulation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gca
