// Copyright 2026 The cpriv Authors
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
#ifndef CPRIV_ERROR_H_
#define CPRIV_ERROR_H_

#include <stdexcept>
#include <string>

namespace cpriv {

// Root of the library's exception hierarchy. Each subclass corresponds to one
// failure category surfaced by the public API.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad dataset spec, loss/train config, missing models.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside the operation's domain (shape mismatch, empty input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed PSF1 / TDS1 / checkpoint / wire content. field() names the
// offending field.
class FormatError : public Error {
 public:
  FormatError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss). log_path points at the partial log when
// one was written.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::string log_csv = {})
      : Error(what), log_csv_(std::move(log_csv)) {}
  const std::string& log_csv() const { return log_csv_; }

 private:
  std::string log_csv_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpriv

#endif  // CPRIV_ERROR_H_
