/*
 * Copyright 2026 The lidar-rebalance Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Error taxonomy. Validation-class errors map to exit code 1, I/O and
// format errors to exit code 2.

#ifndef LIDAR_REBALANCE_ERRORS_HPP_
#define LIDAR_REBALANCE_ERRORS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lidar_rebalance {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// Input violates a documented invariant or numeric range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Unknown class id / class name / record.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or missing configuration (e.g. contextual sampling without a
// semantic source).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: empty windows, missing head weights.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Rigid transform that cannot be inverted or is not a rotation.
class CalibrationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Malformed serialized data. `position` is a byte offset or a 1-based line
// number depending on the format; `unit` says which.
class FormatError : public Error {
 public:
  enum class Unit { kNone, kByte, kLine };

  explicit FormatError(const std::string& what)
      : Error(what), message_(what), unit_(Unit::kNone), position_(0) {}
  FormatError(const std::string& what, Unit unit, std::uint64_t position)
      : Error(Describe(what, unit, position)),
        message_(what),
        unit_(unit),
        position_(position) {}

  int exit_code() const noexcept override { return 2; }
  Unit unit() const noexcept { return unit_; }
  std::uint64_t position() const noexcept { return position_; }

  // Same error with "<context>: " in front, keeping the position.
  FormatError WithContext(const std::string& context) const {
    return FormatError(context + ": " + message_, unit_, position_);
  }

 private:
  static std::string Describe(const std::string& what, Unit unit,
                              std::uint64_t position) {
    switch (unit) {
      case Unit::kByte:
        return what + " (at byte offset " + std::to_string(position) + ")";
      case Unit::kLine:
        return what + " (at line " + std::to_string(position) + ")";
      case Unit::kNone:
        break;
    }
    return what;
  }

  std::string message_;
  Unit unit_;
  std::uint64_t position_;
};

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_ERRORS_HPP_
