#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "ps2f/core/config_io.hpp"
#include "ps2f/core/validation.hpp"
#include "ps2f/filter/s2_set.hpp"
#include "ps2f/linear/riccati.hpp"
#include "ps2f/mpc/nominal_mpc.hpp"
#include "ps2f/service/teleop_server.hpp"
#include "ps2f/sim/case_studies.hpp"
#include "ps2f/sim/closed_loop.hpp"
#include "ps2f/sim/log_io.hpp"
#include "ps2f/sim/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitAssertion = 2;
constexpr int kExitError = 1;

struct CommonFlags {
  std::string config;
  std::string out;
  int steps{-1};
  int grid{101};
  std::string assertions{"on"};
  std::string format{"csv"};
  bool timing{false};
};

void add_common(CLI::App* app, CommonFlags* f, const std::string& default_out) {
  f->out = default_out;
  app->add_option("--config", f->config, "Configuration JSON (defaults to the embedded case)");
  app->add_option("--out", f->out, "Output directory")->capture_default_str();
  app->add_option("--steps", f->steps, "Closed-loop steps (defaults to the case length)");
  app->add_option("--grid", f->grid, "S²-set lattice resolution")->capture_default_str()->check(CLI::Range(2, 2001));
  app->add_option("--assert", f->assertions, "Runtime assertions")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  app->add_option("--format", f->format, "Log format")->check(CLI::IsMember({"csv", "jsonl"}))->capture_default_str();
  app->add_flag("--timing", f->timing, "Record solve times (makes logs run-dependent)");
}

ps2f::Ps2fConfig config_or(const CommonFlags& f, ps2f::Ps2fConfig fallback) {
  if (f.config.empty()) return fallback;
  return ps2f::load_config(f.config);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << std::setw(2) << doc << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_log(const fs::path& dir, const std::string& stem, const ps2f::ClosedLoopLog& log, const std::string& format) {
  const fs::path path = dir / (stem + (format == "csv" ? ".csv" : ".jsonl"));
  std::ofstream out(path);
  if (format == "csv") {
    ps2f::write_log_csv(out, log);
  } else {
    ps2f::write_log_jsonl(out, log);
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

/// Writes <stem>_grid.csv and <stem>_boundary.json; returns the boundary file name.
std::string write_s2(const fs::path& dir, const std::string& stem, const ps2f::S2Grid& grid) {
  {
    std::ofstream out(dir / (stem + "_grid.csv"));
    ps2f::write_grid_csv(out, grid);
  }
  json doc;
  doc["schema"] = ps2f::kLogSchema;
  doc["polylines"] = ps2f::polylines_to_json(ps2f::s2_boundary(grid));
  doc["true_cells"] = grid.count(ps2f::Membership::kTrue);
  doc["indeterminate_cells"] = grid.count(ps2f::Membership::kIndeterminate);
  write_json(dir / (stem + "_boundary.json"), doc);
  return stem + "_boundary.json";
}

void print_summary(const json& summary) { std::cout << summary.dump(2) << '\n'; }

int finish_failed(const fs::path& dir, const ps2f::AssertionFailure& e, const std::string& stem, const CommonFlags& f,
                  int decrease_from_k) {
  write_log(dir, stem, e.log(), f.format);
  json summary = ps2f::log_summary(e.log(), decrease_from_k);
  summary["status"] = "assertion_failed";
  summary["failed_invariant"] = e.invariant();
  write_json(dir / "summary.json", summary);
  print_summary(summary);
  return kExitAssertion;
}

int run_case1(const CommonFlags& f) {
  const ps2f::Ps2fConfig cfg = config_or(f, ps2f::case1_config());
  const fs::path dir(f.out);
  fs::create_directories(dir);
  const ps2f::Vector x0 = ps2f::case1_initial_state();
  const int steps = f.steps >= 0 ? f.steps : ps2f::kCase1Steps;

  const ps2f::NominalSolution nominal = ps2f::solve_nominal(cfg, x0);
  if (!nominal.feasible()) throw std::runtime_error("nominal problem infeasible at x(0)");
  const std::string boundary = write_s2(dir, "s2_k0", ps2f::sample_s2_set(cfg, x0, nominal, cfg.a, cfg.M, f.grid));

  ps2f::ExternalCommandSource source = ps2f::ExternalCommandSource::case1_signal();
  ps2f::ClosedLoopOptions options;
  options.assertions = f.assertions == "on";
  options.timing = f.timing;
  ps2f::ClosedLoopLog log;
  try {
    log = ps2f::run_closed_loop(cfg, x0, source, ps2f::ModeSchedule::constant(cfg.a, cfg.M), steps, options);
  } catch (const ps2f::AssertionFailure& e) {
    return finish_failed(dir, e, "log", f, 0);
  }
  write_log(dir, "log", log, f.format);
  json summary = ps2f::log_summary(log);
  summary["status"] = "ok";
  summary["boundary_files"] = {boundary};
  write_json(dir / "summary.json", summary);
  print_summary(summary);
  return 0;
}

int run_case2(const CommonFlags& f) {
  const ps2f::Ps2fConfig base = config_or(f, ps2f::case2_config());
  const fs::path dir(f.out);
  fs::create_directories(dir);
  const ps2f::Vector x = ps2f::case1_initial_state();
  json summary;
  summary["schema"] = ps2f::kLogSchema;
  summary["state"] = ps2f::vector_to_json(x);
  summary["sweeps"] = json::array();
  bool ok = true;
  std::string failed;
  for (auto p : {ps2f::SweepParameter::kA, ps2f::SweepParameter::kM, ps2f::SweepParameter::kN,
                 ps2f::SweepParameter::kQScale}) {
    const ps2f::SweepResult r = ps2f::parameter_sweep_s2(base, x, p, ps2f::default_sweep_values(p), f.grid);
    const std::string name = ps2f::to_string(p);
    json sweep;
    sweep["parameter"] = name;
    sweep["nesting_flips"] = r.nesting_flips;
    sweep["monotone_expected"] = r.monotone_expected;
    sweep["entries"] = json::array();
    for (const auto& e : r.entries) {
      std::ostringstream value;
      value << e.value;
      json entry{{"value", e.value},
                 {"nominal_feasible", e.nominal_feasible},
                 {"true_cells", e.true_cells},
                 {"indeterminate_cells", e.indeterminate_cells}};
      if (e.nominal_feasible) entry["boundary_file"] = write_s2(dir, "sweep_" + name + "_" + value.str(), e.grid);
      sweep["entries"].push_back(entry);
    }
    if (r.monotone_expected && !r.nested() && f.assertions == "on") {
      ok = false;
      failed = "S2-set nesting in " + name;
    }
    summary["sweeps"].push_back(sweep);
  }
  summary["status"] = ok ? "ok" : "assertion_failed";
  if (!ok) summary["failed_invariant"] = failed;
  write_json(dir / "summary.json", summary);
  print_summary(summary);
  return ok ? 0 : kExitAssertion;
}

json case3_extras(const ps2f::ClosedLoopLog& log) {
  // Faces 4 and 5 are the lower and upper heading bounds.
  json extra;
  extra["heading_violations"] = log.face_violations(4, 1e-8) + log.face_violations(5, 1e-8);
  extra["final_position_norm"] = log.x_final.head(2).norm();
  return extra;
}

int run_case3(const CommonFlags& f, const std::string& variant, int ks) {
  const fs::path dir(f.out);
  fs::create_directories(dir);
  const int steps = f.steps >= 0 ? f.steps : ps2f::kCase3Steps;
  ps2f::ClosedLoopLog log;
  if (variant == "baseline") {
    if (!f.config.empty()) throw std::invalid_argument("case3 --variant baseline uses the embedded configuration");
    log = ps2f::run_baseline_case3(ks, steps, f.timing);
  } else {
    const ps2f::Ps2fConfig cfg = config_or(f, ps2f::case3_config());
    const ps2f::Vector x0 = ps2f::Vector::Zero(cfg.n());
    const ps2f::ModeSchedule schedule = ps2f::case3_schedule(ks);
    const ps2f::NominalSolution nominal = ps2f::solve_nominal(cfg, x0);
    if (!nominal.feasible()) throw std::runtime_error("nominal problem infeasible at x(0)");
    write_s2(dir, "s2_k0", ps2f::sample_s2_set(cfg, x0, nominal, schedule.a_at(0), schedule.M_at(0), f.grid));

    // The filtered variant keeps the goal command throughout; the schedule
    // alone brings the robot home.
    ps2f::ExternalCommandSource source = ps2f::case3_command(ps2f::case3_goal());
    ps2f::ClosedLoopOptions options;
    options.assertions = f.assertions == "on";
    options.timing = f.timing;
    try {
      log = ps2f::run_closed_loop(cfg, x0, source, schedule, steps, options);
    } catch (const ps2f::AssertionFailure& e) {
      return finish_failed(dir, e, "log", f, ks);
    }
  }
  write_log(dir, "log", log, f.format);
  json summary = ps2f::log_summary(log, ks);
  summary.update(case3_extras(log));
  summary["ks"] = ks;
  summary["status"] = "ok";
  write_json(dir / "summary.json", summary);
  print_summary(summary);
  return 0;
}

int run_dare(const std::string& config, const std::string& out) {
  const ps2f::Ps2fConfig cfg = config.empty() ? ps2f::case1_config() : ps2f::load_config(config);
  if (cfg.model.kind() != ps2f::ModelKind::kLinear) throw std::invalid_argument("dare needs a linear model");
  const ps2f::Matrix& A = cfg.model.A();
  const ps2f::Matrix& B = cfg.model.B();
  if (ps2f::controllability_rank(A, B) < A.rows()) throw std::invalid_argument("(A, B) is not controllable");
  const ps2f::RiccatiResult r = ps2f::solve_dare(A, B, cfg.cost.Q, cfg.cost.R);
  const double gamma = ps2f::max_ellipsoid_level(r.P, r.K, cfg.X, cfg.U);
  const Eigen::IOFormat fmt(4, 0, ", ", "\n", "  [", "]");
  std::cout << std::fixed << std::setprecision(4) << "P =\n" << r.P.format(fmt) << "\nK =\n" << r.K.format(fmt)
            << "\ngamma = " << gamma << '\n';
  if (!out.empty()) {
    fs::create_directories(out);
    write_json(fs::path(out) / "dare.json", {{"P", ps2f::matrix_to_json(r.P)},
                                             {"K", ps2f::matrix_to_json(r.K)},
                                             {"gamma", gamma},
                                             {"residual", r.residual}});
  }
  return 0;
}

std::atomic<bool> g_interrupted{false};

int run_serve(const std::string& config, const std::string& which, int port, double tick, int max_ticks, int ks,
              int boundary_grid) {
  ps2f::Ps2fConfig cfg;
  ps2f::ModeSchedule schedule;
  if (which == "case1") {
    cfg = config.empty() ? ps2f::case1_config() : ps2f::load_config(config);
    schedule = ps2f::ModeSchedule::constant(cfg.a, cfg.M);
  } else {
    cfg = config.empty() ? ps2f::case3_config() : ps2f::load_config(config);
    schedule = ps2f::case3_schedule(ks);
  }
  if (cfg.m() != 2) throw std::invalid_argument("serve needs a two-input model");
  ps2f::SessionOptions session_options;
  session_options.boundary_resolution = boundary_grid;
  ps2f::TeleopSession session(cfg, schedule, ps2f::Vector::Zero(cfg.n()), session_options);
  ps2f::ServerOptions options;
  options.port = port;
  options.tick_seconds = tick;
  options.max_ticks = max_ticks;
  ps2f::TeleopServer server(std::move(session), options);
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  const int bound = server.start();
  std::cout << "listening on 127.0.0.1:" << bound << std::endl;
  std::thread watcher([&] {
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  });
  server.wait();
  g_interrupted = true;
  watcher.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive safety-stability filter: case studies, DARE and teleoperation service"};
  app.require_subcommand(1);

  CommonFlags c1, c2, c3;
  auto* case1 = app.add_subcommand("case1", "Linear double integrator, filtered closed loop");
  add_common(case1, &c1, "out/case1");
  auto* case2 = app.add_subcommand("case2", "S²-set parameter sweeps over a, M, N and Q scale");
  add_common(case2, &c2, "out/case2");
  auto* case3 = app.add_subcommand("case3", "Unicycle exploration then exploitation");
  add_common(case3, &c3, "out/case3");
  std::string variant = "ps2f";
  int ks = ps2f::kCase3SwitchIndex;
  case3->add_option("--variant", variant, "baseline or ps2f")->check(CLI::IsMember({"baseline", "ps2f"}))->capture_default_str();
  case3->add_option("--ks", ks, "Switch step Ks")->check(CLI::NonNegativeNumber)->capture_default_str();

  std::string dare_config, dare_out;
  auto* dare = app.add_subcommand("dare", "Print P, K and the terminal level for a linear config");
  dare->add_option("--config", dare_config, "Configuration JSON (defaults to case 1)");
  dare->add_option("--out", dare_out, "Directory for dare.json");

  std::string serve_config, serve_case = "case3";
  int port = 8765, max_ticks = -1, serve_ks = ps2f::kCase3SwitchIndex, boundary_grid = 11;
  double tick = 0.2;
  auto* serve = app.add_subcommand("serve", "Live teleoperation service");
  serve->add_option("--case", serve_case, "Embedded defaults")->check(CLI::IsMember({"case1", "case3"}))->capture_default_str();
  serve->add_option("--config", serve_config, "Configuration JSON overriding the case defaults");
  serve->add_option("--port", port, "TCP port on 127.0.0.1 (0 = ephemeral)")->capture_default_str();
  serve->add_option("--tick", tick, "Tick period in seconds")->check(CLI::NonNegativeNumber)->capture_default_str();
  serve->add_option("--max-ticks", max_ticks, "Stop after this many ticks (negative = forever)")->capture_default_str();
  serve->add_option("--ks", serve_ks, "Switch step Ks for the case 3 schedule")->capture_default_str();
  serve->add_option("--grid", boundary_grid, "Per-frame S²-set lattice resolution (0 disables)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*case1) return run_case1(c1);
    if (*case2) return run_case2(c2);
    if (*case3) return run_case3(c3, variant, ks);
    if (*dare) return run_dare(dare_config, dare_out);
    if (*serve) return run_serve(serve_config, serve_case, port, tick, max_ticks, serve_ks, boundary_grid);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
