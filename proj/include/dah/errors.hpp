#pragma once

#include <stdexcept>
#include <string>

namespace dah {

// Exit codes surfaced by the command-line tool.
enum class ExitCode : int { Ok = 0, ConfigError = 2, DataError = 3, NumericalFailure = 4 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }
  virtual const char* kind() const noexcept = 0;

 private:
  ExitCode code_;
};

/// Invalid distribution or model parameter (mu <= 0, probability outside [0,1], ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ExitCode::NumericalFailure, what) {}
  const char* kind() const noexcept override { return "domain_error"; }
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::ConfigError, what) {}
  const char* kind() const noexcept override { return "config_error"; }
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::DataError, what) {}
  const char* kind() const noexcept override { return "data_error"; }
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::NumericalFailure, what) {}
  const char* kind() const noexcept override { return "numerical_error"; }
};

}  // namespace dah
