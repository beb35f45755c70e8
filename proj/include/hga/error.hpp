// Copyright 2026 The HGA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace hga {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Class index or element index out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a documented precondition (e.g. rows not normalized).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Scalar parameter out of its legal range (tau <= 0, k <= v, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract (missing tensor, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, schedule or dataset configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk artifact: bad magic, version, checksum, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Dataset ingestion or sampling failure.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Degenerate statistics input.
class StatError : public Error {
 public:
  using Error::Error;
};

/// Operation not defined for the encoder head in use.
class UnsupportedHeadError : public Error {
 public:
  using Error::Error;
};

/// Training produced NaN or exploded.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace hga
