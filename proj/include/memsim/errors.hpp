#pragma once

#include <stdexcept>
#include <string>

namespace memsim {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A device or array was asked to act at a time earlier than its last programming event.
class ClockError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain an operation accepts (target conductance, parameter bounds...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector/matrix shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value exceeds the representable range (e.g. a weight beyond w_max).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// An iterative algorithm produced a non-finite intermediate.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

class SingularSystemError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace memsim
