#pragma once

#include <stdexcept>
#include <string>

namespace nnmut {

/// Failure category. The CLI maps these onto its exit codes.
enum class ErrorCode {
  config = 2,  // invalid parameters or specs
  data = 3,    // malformed or unusable input data
  budget = 4,  // attempt budget or convergence failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCode::data, what) {}
};

}  // namespace nnmut
