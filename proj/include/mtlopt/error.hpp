// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mtlopt {

enum class ErrorCode {
  kInvalidInput,
  kDegeneratePolar,
  kZeroGradient,
  kUndefinedCosine,
  kUndefinedProjection,
  kUndefinedRank,
  kConfig,
  kNumericalFailure,
  kIo,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid-input";
    case ErrorCode::kDegeneratePolar: return "degenerate-polar";
    case ErrorCode::kZeroGradient: return "zero-gradient";
    case ErrorCode::kUndefinedCosine: return "undefined-cosine";
    case ErrorCode::kUndefinedProjection: return "undefined-projection";
    case ErrorCode::kUndefinedRank: return "undefined-rank";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kNumericalFailure: return "numerical-failure";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

/// Single exception type for the library. `detail()` carries the extra
/// integer some errors attach: the numerical rank for kDegeneratePolar, the
/// offending task index for kUndefinedCosine / kUndefinedProjection.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> detail = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what,
                              std::optional<std::size_t> detail = std::nullopt) {
  throw Error(code, what, detail);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kInvalidInput, what);
}

}  // namespace mtlopt
