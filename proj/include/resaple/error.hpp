#pragma once

#include <stdexcept>
#include <string>

namespace resaple {

enum class ErrorKind {
  invalid_dimension,
  invalid_k,
  isolated_unit,
  rank_deficient,
  length_mismatch,
  degenerate,
  singular,
  optimization,
  consistency,
  domain,
  io,
};

/// Single exception type for the library; `kind()` lets callers (the CLI in
/// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures caused by inputs (shape, rank, graph structure, files)
  /// as opposed to numerical breakdown.
  bool is_validation() const noexcept {
    switch (kind_) {
      case ErrorKind::invalid_dimension:
      case ErrorKind::invalid_k:
      case ErrorKind::isolated_unit:
      case ErrorKind::rank_deficient:
      case ErrorKind::length_mismatch:
      case ErrorKind::io:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

}  // namespace resaple
