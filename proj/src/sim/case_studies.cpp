#include "ps2f/sim/case_studies.hpp"

#include <algorithm>
#include <cmath>

#include "ps2f/linear/riccati.hpp"

namespace ps2f {

namespace {

Ps2fConfig double_integrator(double rho, int N, double gamma) {
  Matrix A(2, 2);
  A << 1, 1, 0, 1;
  const Matrix B = Matrix::Identity(2, 2);
  Ps2fConfig cfg;
  cfg.model = SystemModel::linear(A, B);
  cfg.N = N;
  cfg.M = std::min(2, N);
  cfg.a = 0.95;
  cfg.cost.Q = rho * Matrix::Identity(2, 2);
  cfg.cost.R = Matrix::Identity(2, 2);
  cfg.X = BoxSet::uniform(2, -2.0, 2.0);
  cfg.U = BoxSet::uniform(2, -1.0, 1.0);
  const RiccatiResult ric = solve_dare(A, B, cfg.cost.Q, cfg.cost.R);
  cfg.cost.Pf = ric.P;
  cfg.terminal_gain = ric.K;
  if (gamma <= 0.0) gamma = max_ellipsoid_level(ric.P, ric.K, cfg.X, cfg.U);
  cfg.Xf = TerminalSet::ellipsoid(ric.P, gamma);
  return cfg;
}

}  // namespace

Ps2fConfig case1_config() { return double_integrator(10.0, 5, kCase1Gamma); }

Vector case1_initial_state() {
  Vector x(2);
  x << 2.0, -2.0;
  return x;
}

Ps2fConfig case2_config(double rho, int N) {
  Ps2fConfig cfg = double_integrator(rho, N, rho == 10.0 ? kCase1Gamma : 0.0);
  cfg.M = N;
  return cfg;
}

Ps2fConfig case3_config() {
  Ps2fConfig cfg;
  cfg.model = SystemModel::unicycle(0.2);
  cfg.N = 5;
  cfg.M = 5;
  cfg.a = kCase3ExploitA;
  cfg.cost.Q = 10.0 * Matrix::Identity(3, 3);
  cfg.cost.R = Matrix::Identity(2, 2);
  cfg.cost.Pf = Matrix::Zero(3, 3);
  Vector hi(3);
  hi << 0.5, 0.5, M_PI / 3.0;
  cfg.X = BoxSet::symmetric(hi);
  cfg.U = BoxSet::uniform(2, -10.0, 10.0);
  cfg.Xf = TerminalSet::origin();
  return cfg;
}

Vector case3_goal() {
  Vector p(2);
  p << 0.5, 0.5;
  return p;
}

ModeSchedule case3_schedule(int Ks) { return ModeSchedule::two_phase(kCase3ExploreA, kCase3ExploitA, Ks, 5); }

ExternalCommandSource case3_command(const Vector& target) {
  return ExternalCommandSource::discounted_goal(target, 5, 0.9, case3_config().U);
}

}  // namespace ps2f
