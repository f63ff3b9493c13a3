// Copyright 2026 The lunatc Authors.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lunatc {

// Base of every error raised by the library. The CLI maps subclasses to
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
  using Error::Error;
};
class DimensionMismatch : public Error {
  using Error::Error;
};
class UnknownWord : public Error {
  using Error::Error;
};
class OddDimension : public Error {
  using Error::Error;
};
class BackendUnavailable : public Error {
  using Error::Error;
};
class DegenerateData : public Error {
  using Error::Error;
};
class EmptySplit : public Error {
  using Error::Error;
};
class IllegalAction : public Error {
  using Error::Error;
};
class EpisodeDone : public Error {
  using Error::Error;
};
class NoLegalActions : public Error {
  using Error::Error;
};
class PositionOverflow : public Error {
  using Error::Error;
};
class TooFewTexts : public Error {
  using Error::Error;
};
class EmptyOutcomes : public Error {
  using Error::Error;
};
class SizeExceedsCorpus : public Error {
  using Error::Error;
};
class InvalidArgument : public Error {
  using Error::Error;
};
class ConfigError : public Error {
  using Error::Error;
};
class SchemaMismatch : public Error {
  using Error::Error;
};

}  // namespace lunatc
