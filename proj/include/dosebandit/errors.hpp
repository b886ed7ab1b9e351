#pragma once

#include <stdexcept>
#include <string>

namespace dosebandit {

// Input table does not match the schema config (e.g. a mapped column is absent).
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration: feature entirely missing in training data, malformed
// coefficient file, unknown experiment option, ...
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dosebandit
