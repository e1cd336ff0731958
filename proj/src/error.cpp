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

#include "opsq/error.hpp"

namespace opsq {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::InvalidEncoding: return "InvalidEncoding";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicatePath: return "DuplicatePath";
    case ErrorCode::LabelTooSmall: return "LabelTooSmall";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InvalidN: return "InvalidN";
    case ErrorCode::MixedN: return "MixedN";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownTerm: return "UnknownTerm";
    case ErrorCode::GramOrderMismatch: return "GramOrderMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InputTooSmall: return "InputTooSmall";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::DegenerateGroups: return "DegenerateGroups";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::InvalidDegrees: return "InvalidDegrees";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::GradcheckFailed: return "GradcheckFailed";
  }
  return "Unknown";
}

}  // namespace opsq
