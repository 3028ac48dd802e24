/* Copyright 2026 The cpcad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef CPCAD_ERROR_HPP_
#define CPCAD_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpcad {

// Base of every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CPCAD_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    explicit Name(const std::string& what)  \
        : Error(std::string(#Name ": ") + what) {} \
  }

CPCAD_DEFINE_ERROR(ConfigError);
CPCAD_DEFINE_ERROR(GeometryError);
CPCAD_DEFINE_ERROR(ShapeError);
CPCAD_DEFINE_ERROR(DatasetLayoutError);
CPCAD_DEFINE_ERROR(MissingMaskError);
CPCAD_DEFINE_ERROR(ImageDecodeError);
CPCAD_DEFINE_ERROR(SamplingError);
CPCAD_DEFINE_ERROR(CheckpointVersionError);
CPCAD_DEFINE_ERROR(CheckpointFormatError);
CPCAD_DEFINE_ERROR(BankTooSmallError);
CPCAD_DEFINE_ERROR(EmptyScoreMapError);
CPCAD_DEFINE_ERROR(DegenerateLabelsError);
CPCAD_DEFINE_ERROR(IOError);

#undef CPCAD_DEFINE_ERROR

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error("DivergenceError: step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// A test-partition sample reached a code path reserved for training data.
// This is a programming error, not a data error, hence logic_error.
class ContaminationError : public std::logic_error {
 public:
  explicit ContaminationError(const std::string& what)
      : std::logic_error("ContaminationError: " + what) {}
};

}  // namespace cpcad

#endif  // CPCAD_ERROR_HPP_
