#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace resil {

/// Base class of every error raised by the library. `module()` names the
/// component that raised it so command-line diagnostics can report provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Dimension mismatch, malformed record, out-of-range argument.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A rollout produced a non-finite state.
class OverflowError : public Error {
 public:
  OverflowError(const std::string& message, std::size_t step)
      : Error("model", message), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Specification text that does not match the grammar.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, std::size_t position)
      : Error("spec", message + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// The exact (Farkas) path received a union-of-cells or ball specification.
class UnsupportedSpecError : public Error {
 public:
  using Error::Error;
};

/// Vertex enumeration would exceed the configured budget.
class EnumerationGuardError : public Error {
 public:
  EnumerationGuardError(const std::string& message, std::size_t required_bits)
      : Error("farkas", message), required_bits_(required_bits) {}
  /// log2 of the number of vertices the request would have needed.
  std::size_t required_bits() const noexcept { return required_bits_; }

 private:
  std::size_t required_bits_;
};

/// Simplex iteration budget exhausted or pivot element vanished.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Effort query whose disturbance bound exceeds what any controller tolerates.
class InfeasibleAtMu0Error : public Error {
 public:
  using Error::Error;
};

/// Scenario search found no point satisfying all sampled constraints.
class NoFeasiblePointError : public Error {
 public:
  using Error::Error;
};

}  // namespace resil
