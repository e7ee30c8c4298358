#pragma once

#include <stdexcept>
#include <string>

namespace pei {

/// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A homography is singular or too ill-conditioned to invert.
class DegenerateTransformError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates the physics of the forward model (e.g. negative photon flux).
class PhysicsError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or inconsistent experiment configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or evaluation. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pei
