#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "ps2f/core/types.hpp"

namespace ps2f {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Strict parse: unknown keys, wrong shapes and non-finite numbers throw ConfigError.
/// Matrices are row-major nested arrays.
Ps2fConfig config_from_json(const nlohmann::json& doc);
Ps2fConfig load_config(const std::string& path);

nlohmann::json config_to_json(const Ps2fConfig& cfg);

nlohmann::json matrix_to_json(const Matrix& m);
nlohmann::json vector_to_json(const Vector& v);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& where);
Vector vector_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace ps2f
