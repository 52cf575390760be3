#pragma once

#include <stdexcept>
#include <string>

namespace figphm {

// Input that cannot be parsed or violates a file contract (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent experiment configuration (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace figphm
