#pragma once

#include <stdexcept>
#include <string>

namespace dance {

// Invalid configuration, shape mismatch, out-of-range argument.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, divergence, numerical breakdown at runtime.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dance
