#pragma once

#include <stdexcept>
#include <string>

namespace rotor {

/// Invalid configuration value. `field` is the dotted path of the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace rotor
