// Copyright 2026 The softprompt Authors.
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

#ifndef SOFTPROMPT_ERRORS_HPP_
#define SOFTPROMPT_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace softprompt {

// Root of every error raised by the library. `is_validation()` separates bad
// user input (CLI exit code 1) from failures that happen while running
// (exit code 2).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool validation = false)
      : std::runtime_error(what), validation_(validation) {}
  bool is_validation() const { return validation_; }

 private:
  bool validation_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error(what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, true) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what, true) {}
};

class IngestionError : public Error {
 public:
  explicit IngestionError(const std::string& what) : Error(what, true) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what, true), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class LengthError : public Error {
 public:
  explicit LengthError(const std::string& what) : Error(what) {}
};

}  // namespace softprompt

#endif  // SOFTPROMPT_ERRORS_HPP_
