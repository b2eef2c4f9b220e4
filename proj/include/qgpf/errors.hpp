// Copyright 2026 The qgpf Authors.
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

#ifndef QGPF_ERRORS_HPP
#define QGPF_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qgpf {

/// Precondition or argument violations.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver failures (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CflError : public NumericalError {
 public:
  CflError(double courant, double limit, long step, int particle = -1);
  [[nodiscard]] double courant() const noexcept { return courant_; }
  [[nodiscard]] int particle() const noexcept { return particle_; }

 private:
  double courant_;
  int particle_;
};

class EllipticError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed snapshot / CSV input.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset);
  [[nodiscard]] std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace qgpf

#endif  // QGPF_ERRORS_HPP
