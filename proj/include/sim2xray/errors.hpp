#pragma once

#include <stdexcept>
#include <string>

namespace sim2xray {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between inputs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value. `key_path` names the offending entry, e.g. "loss.alpha".
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path.empty() ? what : key_path + ": " + what), key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sim2xray
