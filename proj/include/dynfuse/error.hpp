// Copyright 2026 The dynfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DYNFUSE_ERROR_HPP
#define DYNFUSE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace dynfuse {

enum class ErrorCode {
  kInvalidArgument,
  kConstantVector,
  kWindowCoversAll,
  kTooFewTechniques,
  kShapeMismatch,
  kCorruptHeader,
  kNonFiniteValue,
  kDimensionMismatch,
  kEmptyEnsemble,
  kInvalidSpec,
  kMissingRanking,
  kNoCalibratedSubset,
  kConfigError,
  kIoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConstantVector: return "ConstantVector";
    case ErrorCode::kWindowCoversAll: return "WindowCoversAll";
    case ErrorCode::kTooFewTechniques: return "TooFewTechniques";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kCorruptHeader: return "CorruptHeader";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyEnsemble: return "EmptyEnsemble";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kMissingRanking: return "MissingRanking";
    case ErrorCode::kNoCalibratedSubset: return "NoCalibratedSubset";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code and,
/// for configuration and I/O failures, the offending field or path.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string subject = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        subject_(std::move(subject)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorCode code_;
  std::string subject_;
};

}  // namespace dynfuse

#endif  // DYNFUSE_ERROR_HPP
