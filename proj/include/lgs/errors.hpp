// Copyright 2026 The LGS Authors
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

namespace lgs {

// Invalid user-supplied argument (bad n, unknown method, unknown suite).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A visit sequence or prefix violates a routing constraint.
class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the primitive they were passed to.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model/training/inference configuration is inconsistent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an API contract (e.g. gradient of a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Exhaustive oracle asked to enumerate beyond its documented limits.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal invariant broken during a rollout or update (NaN, step cap).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lgs
