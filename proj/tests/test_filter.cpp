#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ps2f/filter/ps2f_filter.hpp"
#include "ps2f/linear/lifted.hpp"
#include "ps2f/linear/riccati.hpp"
#include "ps2f/mpc/nominal_mpc.hpp"
#include "ps2f/sim/case_studies.hpp"
#include "test_util.hpp"

namespace ps2f {
namespace {

using testing::Gen;
using testing::vec2;
using testing::vec3;

constexpr double kTol = 1e-6;

TEST(FilterTest, ZeroAPinsTheNominalInput) {
  const Ps2fConfig cfg = case1_config();
  const Vector x = case1_initial_state();
  const NominalSolution s = solve_nominal(cfg, x);
  const FilterResult f = filter(cfg, x, vec2(1.0, 1.0), s, 0.0, 2);
  EXPECT_LT((f.u_applied - s.v_star[0]).norm(), kTol);
}

TEST(FilterTest, OriginReturnsZero) {
  const Ps2fConfig cfg = case1_config();
  const Vector x = Vector::Zero(2);
  const NominalSolution s = solve_nominal(cfg, x);
  const FilterResult f = filter(cfg, x, vec2(0.7, -0.4), s, 0.95, 2);
  EXPECT_LT(f.u_applied.norm(), kTol);
}

// With M = 1 and B = I the terminal equality fixes u(0) = v*(0).
TEST(FilterTest, SingleStepHorizonPinsTheNominalInput) {
  const Ps2fConfig cfg = case1_config();
  const Vector x = vec2(1.0, -0.5);
  const NominalSolution s = solve_nominal(cfg, x);
  const FilterResult f = filter(cfg, x, vec2(-1.0, 1.0), s, 5.0, 1);
  EXPECT_LT((f.u_applied - s.v_star[0]).norm(), kTol);
}

TEST(FilterTest, NominalInputPassesThrough) {
  const Ps2fConfig cfg = case1_config();
  const Vector x = case1_initial_state();
  const NominalSolution s = solve_nominal(cfg, x);
  const FilterResult f = filter(cfg, x, s.v_star[0], s, 0.95, 2);
  EXPECT_LT((f.u_applied - s.v_star[0]).norm(), kTol);
  EXPECT_LT(f.distortion, 1e-10);
}

TEST(FilterTest, RejectsInvalidArguments) {
  const Ps2fConfig cfg = case1_config();
  const Vector x = case1_initial_state();
  const NominalSolution s = solve_nominal(cfg, x);
  EXPECT_THROW(filter(cfg, x, s.v_star[0], s, -0.1, 2), std::invalid_argument);
  EXPECT_THROW(filter(cfg, x, s.v_star[0], s, 0.5, 0), std::invalid_argument);
  EXPECT_THROW(filter(cfg, x, s.v_star[0], s, 0.5, cfg.N + 1), std::invalid_argument);
  const NominalSolution bad = solve_nominal(cfg, vec2(2.0, 2.0));
  EXPECT_THROW(filter(cfg, vec2(2.0, 2.0), vec2(0.0, 0.0), bad, 0.5, 2), std::invalid_argument);
}

// Property: the output is a member, feasible for every filter constraint,
// the filter is idempotent, and no sampled member beats its distortion.
TEST(FilterTest, RandomProjectionsAreMembersAndMinimal) {
  Gen gen(51);
  const Ps2fConfig cfg = case1_config();
  for (const Vector& x : testing::feasible_states(cfg, 12, 52)) {
    const NominalSolution s = solve_nominal(cfg, x);
    const double a = gen.uniform(0.0, 3.0);
    const int M = gen.integer(1, cfg.N);
    const Vector u_ext = 1.5 * gen.normal(2);
    const FilterResult f = filter(cfg, x, u_ext, s, a, M);
    ASSERT_FALSE(f.used_fallback);
    ASSERT_EQ(static_cast<int>(f.u_stack.size()), M);
    EXPECT_LE(filter_constraint_violation(cfg, f.x_traj, f.u_stack, s, a), kTol);
    EXPECT_NEAR(f.distortion, (u_ext - f.u_applied).squaredNorm(), 1e-12);
    EXPECT_NE(s2_membership(cfg, x, f.u_applied, s, a, M), Membership::kFalse);

    const FilterResult again = filter(cfg, x, f.u_applied, s, a, M);
    EXPECT_LT((again.u_applied - f.u_applied).norm(), 1e-5);

    double best = std::numeric_limits<double>::infinity();
    constexpr int kGrid = 21;
    for (int i = 0; i < kGrid; ++i) {
      for (int j = 0; j < kGrid; ++j) {
        const Vector u0 = vec2(-1.0 + 2.0 * i / (kGrid - 1), -1.0 + 2.0 * j / (kGrid - 1));
        if (s2_membership(cfg, x, u0, s, a, M) == Membership::kTrue) best = std::min(best, (u_ext - u0).squaredNorm());
      }
    }
    EXPECT_LE(f.distortion, best + kTol) << "x = " << x.transpose() << " a = " << a << " M = " << M;
  }
}

// Where no constraint binds, the filter set is the closed-form quadratic
// slice; the projection is compared against a dense lattice of it.
TEST(FilterTest, InactiveStateMatchesClosedFormLattice) {
  const Ps2fConfig cfg = case1_config();
  const RiccatiResult r = solve_dare(cfg.model.A(), cfg.model.B(), cfg.cost.Q, cfg.cost.R);
  const Vector x = vec2(0.2, -0.1);
  const NominalSolution s = solve_nominal(cfg, x);
  constexpr double a = 0.95;
  constexpr int M = 2;
  const LiftedMatrices lifted = build_lifted(cfg.model.A(), cfg.model.B(), cfg.cost.Q, cfg.cost.R, r.P, r.K, M, a);
  constexpr int kGrid = 401;
  const double h = 2.0 / (kGrid - 1);
  for (const Vector& u_ext : {vec2(0.9, 0.9), vec2(-0.8, 0.3), vec2(0.0, -1.0)}) {
    const FilterResult f = filter(cfg, x, u_ext, s, a, M);
    ASSERT_FALSE(f.used_fallback);
    EXPECT_LE(closed_form_min_value(lifted, x, f.u_applied), 1e-6);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kGrid; ++i) {
      for (int j = 0; j < kGrid; ++j) {
        const Vector u0 = vec2(-1.0 + h * i, -1.0 + h * j);
        if (closed_form_membership(lifted, x, u0)) best = std::min(best, (u_ext - u0).squaredNorm());
      }
    }
    ASSERT_TRUE(std::isfinite(best));
    EXPECT_LE(f.distortion, best + kTol);
    // Every point of the set lies within h/√2 of some lattice node.
    const double slack = 2.0 * std::sqrt(f.distortion) * h + h * h;
    EXPECT_GE(f.distortion, best - slack);
  }
}

TEST(FilterTest, UnicycleProjectionIsFeasible) {
  const Ps2fConfig cfg = case3_config();
  const Vector x = vec3(0.1, -0.05, 0.2);
  const NominalSolution s = solve_nominal(cfg, x);
  ASSERT_TRUE(s.feasible());
  for (const double a : {0.5, 100.0}) {
    const FilterResult f = filter(cfg, x, vec2(3.0, 1.0), s, a, cfg.M);
    EXPECT_LE(filter_constraint_violation(cfg, f.x_traj, f.u_stack, s, a), kTol) << "a = " << a;
    EXPECT_GE(cfg.U.min_margin(f.u_applied), -kTol);
  }
}

TEST(MembershipTest, NominalInputIsAMember) {
  const Ps2fConfig cfg = case1_config();
  const Vector x = case1_initial_state();
  const NominalSolution s = solve_nominal(cfg, x);
  EXPECT_EQ(s2_membership(cfg, x, s.v_star[0], s, 0.95, 2), Membership::kTrue);
  EXPECT_EQ(s2_membership(cfg, x, vec2(1.5, 0.0), s, 0.95, 2), Membership::kFalse);
}

TEST(MembershipTest, UnicycleFirstStepLeavingXIsRejected) {
  const Ps2fConfig cfg = case3_config();
  const Vector x = vec3(0.4, 0.0, 0.0);
  const NominalSolution s = solve_nominal(cfg, x);
  ASSERT_TRUE(s.feasible());
  // px(1) = 0.4 + 0.2·2 = 0.8 > 0.5.
  EXPECT_EQ(s2_membership(cfg, x, vec2(2.0, 0.0), s, 100.0, cfg.M), Membership::kFalse);
  EXPECT_EQ(s2_membership(cfg, x, s.v_star[0], s, 100.0, cfg.M), Membership::kTrue);
}

TEST(MembershipTest, PerformanceSlackOfTheNominalSegment) {
  const Ps2fConfig cfg = case1_config();
  const Vector x = case1_initial_state();
  const NominalSolution s = solve_nominal(cfg, x);
  const std::vector<Vector> states(s.z_star.begin(), s.z_star.begin() + 3);
  const std::vector<Vector> inputs(s.v_star.begin(), s.v_star.begin() + 2);
  const double expected = -0.95 * cfg.cost.stage(x, s.v_star[0]);
  EXPECT_NEAR(performance_slack(cfg, states, inputs, s, 0.95), expected, 1e-9 * std::abs(expected));
  EXPECT_LE(filter_constraint_violation(cfg, states, inputs, s, 0.95), 1e-9);
}

}  // namespace
}  // namespace ps2f
