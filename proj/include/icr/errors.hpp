#pragma once

#include <stdexcept>
#include <string>

namespace icr {

/// Invalid or missing configuration; `key` names the offending setting.
struct ConfigError : std::runtime_error {
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key(std::move(key)) {}
  std::string key;
};

}  // namespace icr
