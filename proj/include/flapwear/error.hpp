/*
 * Copyright 2026 The flapwear Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace flapwear {

enum class ErrorCode {
  // taxonomy
  InconsistentParts,
  MissingSeverity,
  SpuriousSeverity,
  // predictions
  BadLength,
  OutOfRange,
  NotNormalized,
  ViewMismatch,
  ParseError,
  ValidationError,
  EmptyInput,
  InvalidArgument,
  // engine
  MissingSeverityInput,
  TooFewRuns,
  MixedTools,
  // metrics
  IndexOutOfRange,
  StageMismatch,
  EmptyMatrix,
  UndefinedClassMetric,
  DegenerateInput,
  // propagation
  LedgerInconsistent,
  BadMix,
  // synth
  InvalidSpec,
  BadRow,
  // cli
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InconsistentParts: return "InconsistentParts";
    case ErrorCode::MissingSeverity: return "MissingSeverity";
    case ErrorCode::SpuriousSeverity: return "SpuriousSeverity";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::ViewMismatch: return "ViewMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingSeverityInput: return "MissingSeverityInput";
    case ErrorCode::TooFewRuns: return "TooFewRuns";
    case ErrorCode::MixedTools: return "MixedTools";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::StageMismatch: return "StageMismatch";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::UndefinedClassMetric: return "UndefinedClassMetric";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::LedgerInconsistent: return "LedgerInconsistent";
    case ErrorCode::BadMix: return "BadMix";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::BadRow: return "BadRow";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Single exception type for the library. `line` is set for errors raised
// while reading line-oriented input files (1-based). `cause` carries the
// underlying validation code for ValidationError.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt,
        std::optional<ErrorCode> cause = std::nullopt)
      : std::runtime_error(format(code, message, line)),
        code_(code),
        line_(line),
        cause_(cause) {}

  ErrorCode code() const { return code_; }
  std::optional<std::size_t> line() const { return line_; }
  std::optional<ErrorCode> cause() const { return cause_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            std::optional<std::size_t> line) {
    std::string out(to_string(code));
    if (line) out += " (line " + std::to_string(*line) + ")";
    out += ": ";
    out += message;
    return out;
  }

  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::optional<ErrorCode> cause_;
};

}  // namespace flapwear
