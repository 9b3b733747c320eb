#pragma once

#include <stdexcept>
#include <string>

namespace pfbv {

/// Invalid user input: mesh requests, material data, scheme parameters, config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or field sizes that do not match the discretization.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation that is not defined for the selected load mode.
class UnsupportedModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Linear or constrained solver did not reach its tolerance.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pfbv
