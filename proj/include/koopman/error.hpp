// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace koopman {

/// Broad failure class; the CLI maps each to an exit status.
enum class ErrorKind { Config, Data, Solver };

/// Exit status used by the command line tool for each error class.
constexpr int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Solver: return 4;
  }
  return 1;
}

/// Base of every error raised by the library. `code()` is a short name such
/// as "SpacingError"; `module()` names the component that raised it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, std::string code, const std::string& message)
      : std::runtime_error(module + "." + code + ": " + message),
        kind_(kind),
        module_(std::move(module)),
        code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }
  const std::string& code() const noexcept { return code_; }
  std::string qualified_code() const { return module_ + "." + code_; }

 private:
  ErrorKind kind_;
  std::string module_;
  std::string code_;
};

#define KOOPMAN_DEFINE_ERROR(Name, Kind, Module)                  \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& message)                     \
        : Error(ErrorKind::Kind, Module, #Name, message) {}       \
  };

// data-io
KOOPMAN_DEFINE_ERROR(SpacingError, Data, "data-io")
KOOPMAN_DEFINE_ERROR(InsufficientData, Data, "data-io")
KOOPMAN_DEFINE_ERROR(RangeError, Config, "data-io")
KOOPMAN_DEFINE_ERROR(FileError, Data, "data-io")

// embedding-kernel
KOOPMAN_DEFINE_ERROR(ConfigError, Config, "config")
KOOPMAN_DEFINE_ERROR(BandwidthError, Solver, "embedding-kernel")

// koopman-spectral
KOOPMAN_DEFINE_ERROR(SolverError, Solver, "koopman-spectral")
KOOPMAN_DEFINE_ERROR(DegenerateSpectrum, Solver, "koopman-spectral")
KOOPMAN_DEFINE_ERROR(TruncationError, Solver, "koopman-spectral")
KOOPMAN_DEFINE_ERROR(HistoryError, Data, "koopman-spectral")

// spatiotemporal / forecast
KOOPMAN_DEFINE_ERROR(AlignmentError, Data, "alignment")
KOOPMAN_DEFINE_ERROR(PairingError, Data, "spatiotemporal")
KOOPMAN_DEFINE_ERROR(FitError, Solver, "forecast")

#undef KOOPMAN_DEFINE_ERROR

/// Unparsable CSV cell. Row and column are 1-based positions in the file.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& message)
      : Error(ErrorKind::Data, "data-io", "ParseError",
              "row " + std::to_string(row) + ", column " + std::to_string(column) + ": " + message),
        row_(row),
        column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

/// A kernel row with no positive entry.
class IsolatedPointError : public Error {
 public:
  explicit IsolatedPointError(std::size_t index)
      : Error(ErrorKind::Solver, "embedding-kernel", "IsolatedPointError",
              "kernel row " + std::to_string(index) + " has no positive entry"),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Nystrom extension cannot be evaluated stably for eigenfunction `index`
/// (or for the whole kernel row when `index` is npos).
class IllConditioned : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  IllConditioned(std::size_t index, const std::string& message)
      : Error(ErrorKind::Solver, "koopman-spectral", "IllConditioned", message), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Non-finite state during a forecast rollout.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::size_t step)
      : Error(ErrorKind::Solver, "forecast", "DivergenceError",
              "non-finite state at rollout step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace koopman
