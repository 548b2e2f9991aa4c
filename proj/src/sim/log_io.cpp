#include "ps2f/sim/log_io.hpp"

#include <cctype>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ps2f {

namespace {

std::string cell(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json vec(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream s(line);
  while (std::getline(s, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::runtime_error("read_log_csv: bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> log_columns(int n, int m) {
  std::vector<std::string> c{"k"};
  for (int i = 1; i <= n; ++i) c.push_back("x" + std::to_string(i));
  for (int i = 1; i <= m; ++i) c.push_back("u_ext" + std::to_string(i));
  for (int i = 1; i <= m; ++i) c.push_back("u" + std::to_string(i));
  for (const char* name : {"V", "a", "M", "stage_cost"}) c.emplace_back(name);
  for (int i = 1; i <= n; ++i) {
    c.push_back("mx" + std::to_string(i) + "_lo");
    c.push_back("mx" + std::to_string(i) + "_hi");
  }
  for (int i = 1; i <= m; ++i) {
    c.push_back("mu" + std::to_string(i) + "_lo");
    c.push_back("mu" + std::to_string(i) + "_hi");
  }
  for (const char* name : {"nominal_status", "filter_status", "fallback", "t_nominal_ms", "t_filter_ms"}) {
    c.emplace_back(name);
  }
  return c;
}

void write_log_csv(std::ostream& out, const ClosedLoopLog& log) {
  const auto columns = log_columns(log.n, log.m);
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  auto put_vec = [&](const Vector& v, int size) {
    for (int i = 0; i < size; ++i) out << ',' << (i < v.size() ? cell(v(i)) : "");
  };
  for (const auto& s : log.steps) {
    out << s.k;
    put_vec(s.x, log.n);
    put_vec(s.u_ext, log.m);
    put_vec(s.u, log.m);
    out << ',' << cell(s.V) << ',' << cell(s.a) << ',' << (s.filtered ? std::to_string(s.M) : "") << ','
        << cell(s.stage_cost);
    put_vec(s.state_margins, 2 * log.n);
    put_vec(s.input_margins, 2 * log.m);
    out << ',' << (s.filtered ? opt::to_string(s.nominal_status) : "none") << ','
        << (s.filtered ? opt::to_string(s.filter_status) : "none") << ',' << (s.used_fallback ? 1 : 0) << ','
        << cell(s.t_nominal_ms) << ',' << cell(s.t_filter_ms) << '\n';
  }
  out << log.steps.size();
  put_vec(log.x_final, log.n);
  put_vec(Vector(), 2 * log.m);
  out << ',' << cell(log.V_final) << ",,,";
  put_vec(log.x_final_margins, 2 * log.n);
  put_vec(Vector(), 2 * log.m);
  out << ",,,,,\n";
}

nlohmann::json step_to_json(const StepRecord& s) {
  nlohmann::json j;
  j["schema"] = kLogSchema;
  j["k"] = s.k;
  j["x"] = vec(s.x);
  j["u_ext"] = vec(s.u_ext);
  j["u"] = vec(s.u);
  j["V"] = number(s.V);
  j["a"] = number(s.a);
  j["M"] = s.filtered ? nlohmann::json(s.M) : nlohmann::json(nullptr);
  j["stage_cost"] = number(s.stage_cost);
  j["state_margins"] = vec(s.state_margins);
  j["input_margins"] = vec(s.input_margins);
  j["nominal_status"] = s.filtered ? opt::to_string(s.nominal_status) : "none";
  j["filter_status"] = s.filtered ? opt::to_string(s.filter_status) : "none";
  j["fallback"] = s.used_fallback;
  j["decrease_slack"] = number(s.decrease_slack);
  j["t_nominal_ms"] = number(s.t_nominal_ms);
  j["t_filter_ms"] = number(s.t_filter_ms);
  return j;
}

void write_log_jsonl(std::ostream& out, const ClosedLoopLog& log) {
  for (const auto& s : log.steps) out << step_to_json(s).dump() << '\n';
  nlohmann::json last;
  last["schema"] = kLogSchema;
  last["k"] = log.steps.size();
  last["x"] = vec(log.x_final);
  last["V"] = number(log.V_final);
  last["state_margins"] = vec(log.x_final_margins);
  out << last.dump() << '\n';
}

std::vector<CsvLogRow> read_log_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_log_csv: empty input");
  const auto header = split_csv(line);
  int n = 0, m = 0;
  for (const auto& h : header) {
    if (h.size() > 1 && h[0] == 'x' && std::isdigit(static_cast<unsigned char>(h[1]))) ++n;
    if (h.rfind("u_ext", 0) == 0) ++m;
  }
  if (n == 0 || m == 0 || header != log_columns(n, m)) throw std::runtime_error("read_log_csv: unexpected header");
  std::vector<CsvLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw std::runtime_error("read_log_csv: wrong field count");
    CsvLogRow r;
    r.k = std::stoi(f[0]);
    r.x.resize(n);
    r.u_ext.resize(m);
    r.u.resize(m);
    for (int i = 0; i < n; ++i) r.x(i) = parse_cell(f[1 + i]);
    for (int i = 0; i < m; ++i) r.u_ext(i) = parse_cell(f[1 + n + i]);
    for (int i = 0; i < m; ++i) r.u(i) = parse_cell(f[1 + n + m + i]);
    r.V = parse_cell(f[1 + n + 2 * m]);
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json log_summary(const ClosedLoopLog& log, int decrease_from_k) {
  nlohmann::json j;
  j["schema"] = kLogSchema;
  j["variant"] = log.variant;
  j["steps"] = log.steps.size();
  j["violations"] = log.violations();
  j["fallbacks"] = log.fallbacks();
  j["final_state"] = vec(log.x_final);
  j["final_state_norm"] = number(log.x_final.size() > 0 ? log.x_final.norm() : 0.0);
  const double slack = log.max_decrease_slack(decrease_from_k);
  j["max_decrease_slack"] = number(slack);
  j["decrease_from_k"] = decrease_from_k;
  return j;
}

}  // namespace ps2f
