#pragma once

#include <stdexcept>
#include <string>

namespace qbat {

/// Base of every error thrown by the library. `code()` is the stable
/// machine-readable identifier the CLI prints in its error JSON.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

/// Argument outside the mathematical domain of a function (e.g. stoichiometry
/// outside [0, 1]).
class DomainError : public Error {
public:
  explicit DomainError(const std::string& what) : Error("domain_error", what) {}
};

/// Invalid user input: malformed files, inconsistent configuration, bad
/// arguments.
class InputError : public Error {
public:
  explicit InputError(const std::string& what, std::string code = "input_error")
      : Error(std::move(code), what) {}
};

/// Row-level parse failure; `row()` is 1-based and counts the header line.
class ParseError : public InputError {
public:
  ParseError(std::size_t row, const std::string& what)
      : InputError("row " + std::to_string(row) + ": " + what, "parse_error"), row_(row) {}
  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

/// Interfacial kinetics evaluated at or beyond a saturation limit.
class KineticsError : public Error {
public:
  explicit KineticsError(const std::string& what) : Error("kinetics_error", what) {}
};

/// Newton failed on one implicit step. The caller may retry with a smaller dt.
class StepFailure : public Error {
public:
  StepFailure(double residual_norm, const std::string& what)
      : Error("step_failure", what), residual_norm_(residual_norm) {}
  double residual_norm() const noexcept { return residual_norm_; }

private:
  double residual_norm_;
};

/// Unrecoverable failure while integrating a profile.
class SimulationError : public Error {
public:
  SimulationError(double time_s, const std::string& what)
      : Error("simulation_error", what + " (t = " + std::to_string(time_s) + " s)"),
        time_s_(time_s) {}
  double time() const noexcept { return time_s_; }

private:
  double time_s_;
};

class CalibrationError : public Error {
public:
  explicit CalibrationError(const std::string& what) : Error("calibration_error", what) {}
};

class NormalizationError : public Error {
public:
  explicit NormalizationError(const std::string& what) : Error("normalization_error", what) {}
};

}  // namespace qbat
