#include "ps2f/core/config_io.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

namespace ps2f {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where, std::initializer_list<const char*> allowed,
                    std::initializer_list<const char*> required) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!keys.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
  for (const char* key : required) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  }
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": non-finite number");
  return v;
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

BoxSet box_from_json(const json& j, const std::string& where) {
  require_object(j, where, {"lower", "upper"}, {"lower", "upper"});
  BoxSet box{vector_from_json(j["lower"], where + ".lower"), vector_from_json(j["upper"], where + ".upper")};
  if (box.lower.size() != box.upper.size()) throw ConfigError(where + ": lower/upper size mismatch");
  return box;
}

}  // namespace

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
  const auto rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw ConfigError(where + ": rows must be non-empty arrays");
  const auto cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(where + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) {
      m(r, c) = number(j[r][c], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  return m;
}

Vector vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

Ps2fConfig config_from_json(const json& doc) {
  require_object(doc, "config", {"model", "N", "M", "a", "cost", "X", "U", "Xf", "terminal_gain"},
                 {"model", "N", "M", "a", "cost", "X", "U", "Xf"});
  Ps2fConfig cfg;

  const json& model = doc["model"];
  if (!model.is_object() || !model.contains("kind") || !model["kind"].is_string()) {
    throw ConfigError("config.model: expected an object with a string 'kind'");
  }
  const std::string kind = model["kind"].get<std::string>();
  if (kind == "linear") {
    require_object(model, "config.model", {"kind", "A", "B"}, {"kind", "A", "B"});
    Matrix A = matrix_from_json(model["A"], "config.model.A");
    Matrix B = matrix_from_json(model["B"], "config.model.B");
    if (A.rows() != A.cols() || B.rows() != A.rows()) throw ConfigError("config.model: A/B shapes inconsistent");
    cfg.model = SystemModel::linear(std::move(A), std::move(B));
  } else if (kind == "unicycle") {
    require_object(model, "config.model", {"kind", "Ts"}, {"kind", "Ts"});
    const double ts = number(model["Ts"], "config.model.Ts");
    if (!(ts > 0.0)) throw ConfigError("config.model.Ts: must be positive");
    cfg.model = SystemModel::unicycle(ts);
  } else {
    throw ConfigError("config.model.kind: expected 'linear' or 'unicycle' (custom models are code-only)");
  }

  cfg.N = integer(doc["N"], "config.N");
  cfg.M = integer(doc["M"], "config.M");
  cfg.a = number(doc["a"], "config.a");

  const json& cost = doc["cost"];
  require_object(cost, "config.cost", {"Q", "R", "Pf"}, {"Q", "R"});
  cfg.cost.Q = matrix_from_json(cost["Q"], "config.cost.Q");
  cfg.cost.R = matrix_from_json(cost["R"], "config.cost.R");
  cfg.cost.Pf = cost.contains("Pf") ? matrix_from_json(cost["Pf"], "config.cost.Pf")
                                    : Matrix::Zero(cfg.n(), cfg.n());

  cfg.X = box_from_json(doc["X"], "config.X");
  cfg.U = box_from_json(doc["U"], "config.U");

  const json& xf = doc["Xf"];
  if (!xf.is_object() || !xf.contains("kind") || !xf["kind"].is_string()) {
    throw ConfigError("config.Xf: expected an object with a string 'kind'");
  }
  const std::string xf_kind = xf["kind"].get<std::string>();
  if (xf_kind == "ellipsoid") {
    require_object(xf, "config.Xf", {"kind", "P", "gamma"}, {"kind", "P", "gamma"});
    cfg.Xf = TerminalSet::ellipsoid(matrix_from_json(xf["P"], "config.Xf.P"), number(xf["gamma"], "config.Xf.gamma"));
  } else if (xf_kind == "origin") {
    require_object(xf, "config.Xf", {"kind"}, {"kind"});
    cfg.Xf = TerminalSet::origin();
  } else if (xf_kind == "none") {
    require_object(xf, "config.Xf", {"kind"}, {"kind"});
    cfg.Xf = TerminalSet::none();
  } else {
    throw ConfigError("config.Xf.kind: expected 'ellipsoid', 'origin' or 'none'");
  }

  if (doc.contains("terminal_gain")) {
    cfg.terminal_gain = matrix_from_json(doc["terminal_gain"], "config.terminal_gain");
  }
  return cfg;
}

Ps2fConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(doc);
}

json config_to_json(const Ps2fConfig& cfg) {
  json doc;
  json model;
  model["kind"] = to_string(cfg.model.kind());
  if (cfg.model.kind() == ModelKind::kLinear) {
    model["A"] = matrix_to_json(cfg.model.A());
    model["B"] = matrix_to_json(cfg.model.B());
  } else if (cfg.model.kind() == ModelKind::kUnicycle) {
    model["Ts"] = cfg.model.sampling_time();
  }
  doc["model"] = model;
  doc["N"] = cfg.N;
  doc["M"] = cfg.M;
  doc["a"] = cfg.a;
  doc["cost"] = {{"Q", matrix_to_json(cfg.cost.Q)}, {"R", matrix_to_json(cfg.cost.R)},
                 {"Pf", matrix_to_json(cfg.cost.Pf)}};
  doc["X"] = {{"lower", vector_to_json(cfg.X.lower)}, {"upper", vector_to_json(cfg.X.upper)}};
  doc["U"] = {{"lower", vector_to_json(cfg.U.lower)}, {"upper", vector_to_json(cfg.U.upper)}};
  json xf;
  xf["kind"] = to_string(cfg.Xf.kind);
  if (cfg.Xf.kind == TerminalKind::kEllipsoid) {
    xf["P"] = matrix_to_json(cfg.Xf.P);
    xf["gamma"] = cfg.Xf.gamma;
  }
  doc["Xf"] = xf;
  if (cfg.terminal_gain.size() > 0) doc["terminal_gain"] = matrix_to_json(cfg.terminal_gain);
  return doc;
}

}  // namespace ps2f
