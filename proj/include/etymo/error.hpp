// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace etymo {

enum class ErrorCode {
  DuplicateId,
  SchemaError,
  NotFound,
  EmptyCorpus,
  EmptyVector,
  ZeroNorm,
  IdMismatch,
  DuplicateNode,
  MissingDate,
  EmptyGraph,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyVector: return "EmptyVector";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::DuplicateNode: return "DuplicateNode";
    case ErrorCode::MissingDate: return "MissingDate";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `line()` is set for SchemaError
/// raised while reading line-delimited input (1-based, 0 otherwise).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::size_t line_;
};

}  // namespace etymo
