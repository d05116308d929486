// Copyright 2026 The AdvFace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ADVFACE_ERROR_HPP_
#define ADVFACE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace advface {

// Error categories. Each maps to a stable machine-readable code used by the
// CLI error record.
enum class ErrorCode {
  kConfig,
  kIo,
  kCorruption,
  kNotFound,
  kContract,
  kPrecondition,
  kTraining,
  kNumeric,
  kParameter,
  kCalibration,
  kBuild,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

#define ADVFACE_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(Code, message) {}    \
  };

ADVFACE_DEFINE_ERROR(ConfigError, ErrorCode::kConfig)
ADVFACE_DEFINE_ERROR(IoError, ErrorCode::kIo)
ADVFACE_DEFINE_ERROR(CorruptionError, ErrorCode::kCorruption)
ADVFACE_DEFINE_ERROR(NotFoundError, ErrorCode::kNotFound)
ADVFACE_DEFINE_ERROR(ContractError, ErrorCode::kContract)
ADVFACE_DEFINE_ERROR(PreconditionError, ErrorCode::kPrecondition)
ADVFACE_DEFINE_ERROR(ParameterError, ErrorCode::kParameter)
ADVFACE_DEFINE_ERROR(CalibrationError, ErrorCode::kCalibration)
ADVFACE_DEFINE_ERROR(BuildError, ErrorCode::kBuild)

#undef ADVFACE_DEFINE_ERROR

// Training diverged; carries the epoch at which the loss went non-finite.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, int epoch)
      : Error(ErrorCode::kTraining, message), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Non-finite value inside an iterative numeric procedure.
class NumericError : public Error {
 public:
  NumericError(const std::string& message, int iteration)
      : Error(ErrorCode::kNumeric, message), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace advface

#endif  // ADVFACE_ERROR_HPP_
