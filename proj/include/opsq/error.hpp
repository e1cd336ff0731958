// Copyright 2026 The opsq Authors
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opsq {

enum class ErrorCode {
  EmptyTrace,
  InvalidEncoding,
  MissingFile,
  MalformedRow,
  DuplicatePath,
  LabelTooSmall,
  InvalidParams,
  InvalidN,
  MixedN,
  EmptyCorpus,
  UnknownTerm,
  GramOrderMismatch,
  LengthMismatch,
  ShapeMismatch,
  InputTooSmall,
  LabelOutOfRange,
  NonFiniteGradient,
  EmptyDataset,
  EmptyMatrix,
  EmptyList,
  DegenerateGroups,
  TooFewGroups,
  TooFewObservations,
  InvalidDegrees,
  BadFormat,
  IoError,
  UsageError,
  GradcheckFailed,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every failure in the library is reported through this exception. The CLI
/// renders it as `ERROR:<code>:<message>`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace opsq
