#pragma once

#include <stdexcept>
#include <string>

namespace tami {

// Each category maps onto a CLI exit code (see commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class VerificationError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown during training (non-finite loss or gradient).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Warnings go to stderr unless silenced (tests silence them).
void log_warning(const std::string& msg);
void set_warnings_enabled(bool enabled);

}  // namespace tami
