// Copyright 2026 The hyfl Authors. All Rights Reserved.
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

#ifndef HYFL_ERRORS_H_
#define HYFL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace hyfl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or grid shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, untrained models, mismatched configs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Payload bits cannot be decoded (bad index, truncated coder input).
class CorruptStreamError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input cannot be represented by the encoder (e.g. index >= n_z).
class EncodeError : public Error {
 public:
  using Error::Error;
};

// A frozen parameter changed during training.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Container parse failures. Each failure class has its own kind so callers
// can tell a foreign file from a damaged one.
class ParseError : public Error {
 public:
  enum class Kind { kBadMagic, kUnknownVersion, kTruncated, kInconsistent };

  ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace hyfl

#endif  // HYFL_ERRORS_H_
