// Copyright 2026 The LEReg Authors
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

namespace lereg {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range input data (edge indices, dataset bundles).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Shape or structural mismatch between operands.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values encountered where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (lengths, ranges, empty index sets).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problem too large for an exact/dense routine.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Dataset split cannot be formed from the available nodes.
class SplitError : public Error {
 public:
  using Error::Error;
};

}  // namespace lereg
