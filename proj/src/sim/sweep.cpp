#include "ps2f/sim/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ps2f/linear/riccati.hpp"
#include "ps2f/mpc/nominal_mpc.hpp"

namespace ps2f {

namespace {

Ps2fConfig configure(const Ps2fConfig& base, SweepParameter p, double value) {
  Ps2fConfig cfg = base;
  switch (p) {
    case SweepParameter::kA:
      cfg.a = value;
      break;
    case SweepParameter::kM:
      cfg.M = static_cast<int>(std::lround(value));
      break;
    case SweepParameter::kN:
      cfg.N = static_cast<int>(std::lround(value));
      cfg.M = cfg.N;
      break;
    case SweepParameter::kQScale: {
      if (!cfg.model.is_linear()) throw std::invalid_argument("parameter_sweep_s2: Q sweep needs a linear model");
      cfg.cost.Q = value * Matrix::Identity(cfg.n(), cfg.n());
      const RiccatiResult ric = solve_dare(cfg.model.A(), cfg.model.B(), cfg.cost.Q, cfg.cost.R);
      cfg.cost.Pf = ric.P;
      cfg.terminal_gain = ric.K;
      cfg.Xf = TerminalSet::ellipsoid(ric.P, max_ellipsoid_level(ric.P, ric.K, cfg.X, cfg.U));
      break;
    }
  }
  return cfg;
}

}  // namespace

std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kA:
      return "a";
    case SweepParameter::kM:
      return "M";
    case SweepParameter::kN:
      return "N";
    case SweepParameter::kQScale:
      return "rho";
  }
  return "unknown";
}

std::vector<double> default_sweep_values(SweepParameter p) {
  switch (p) {
    case SweepParameter::kA:
      return {0.0, 0.2, 0.5, 0.95, 2.0, 10.0};
    case SweepParameter::kM:
      return {1, 2, 3, 4, 5};
    case SweepParameter::kN:
      return {1, 2, 3, 5, 8};
    case SweepParameter::kQScale:
      return {1.0, 5.0, 10.0, 50.0};
  }
  return {};
}

SweepResult parameter_sweep_s2(const Ps2fConfig& base, const Vector& x, SweepParameter parameter,
                               std::vector<double> values, int resolution, int threads) {
  if (base.m() != 2) throw std::invalid_argument("parameter_sweep_s2: requires a two-input system");
  std::sort(values.begin(), values.end());
  SweepResult result;
  result.parameter = parameter;
  result.monotone_expected = parameter == SweepParameter::kA || parameter == SweepParameter::kM;
  result.entries.reserve(values.size());
  const S2Grid* previous = nullptr;
  for (double value : values) {
    const Ps2fConfig cfg = configure(base, parameter, value);
    SweepEntry entry;
    entry.value = value;
    const NominalSolution nominal = solve_nominal(cfg, x);
    entry.nominal_feasible = nominal.feasible();
    if (entry.nominal_feasible) {
      entry.grid = sample_s2_set(cfg, x, nominal, cfg.a, cfg.M, resolution, threads);
      entry.boundary = s2_boundary(entry.grid);
      entry.true_cells = entry.grid.count(Membership::kTrue);
      entry.indeterminate_cells = entry.grid.count(Membership::kIndeterminate);
    }
    result.entries.push_back(std::move(entry));
    const S2Grid& current = result.entries.back().grid;
    if (!result.entries.back().nominal_feasible) continue;
    if (previous != nullptr) {
      for (int i = 0; i < resolution; ++i) {
        for (int j = 0; j < resolution; ++j) {
          if (previous->member(i, j) && !current.member(i, j)) ++result.nesting_flips;
        }
      }
    }
    previous = &current;
  }
  return result;
}

}  // namespace ps2f
