#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <string>

#include "ps2f/mpc/nominal_mpc.hpp"
#include "ps2f/sim/case_studies.hpp"
#include "ps2f/sim/closed_loop.hpp"
#include "ps2f/sim/commands.hpp"
#include "ps2f/sim/log_io.hpp"
#include "test_util.hpp"

namespace ps2f {
namespace {

using testing::Gen;
using testing::vec2;
using testing::vec3;

int heading_violations(const ClosedLoopLog& log) { return log.face_violations(4) + log.face_violations(5); }

TEST(CommandTest, CaseOneSignal) {
  ExternalCommandSource s = ExternalCommandSource::case1_signal();
  const SystemModel model = case1_config().model;
  const Vector u = s.next(3, vec2(0.4, -0.7), model);
  EXPECT_NEAR(u(0), -1.2 * std::cos(0.8), 1e-15);
  EXPECT_NEAR(u(1), -0.07, 1e-15);
}

TEST(CommandTest, ReplayHoldsTheLastEntry) {
  ExternalCommandSource s = ExternalCommandSource::replay({vec2(1, 2), vec2(3, 4)});
  const SystemModel model = case1_config().model;
  EXPECT_EQ(s.next(0, vec2(0, 0), model), vec2(1, 2));
  EXPECT_EQ(s.next(1, vec2(0, 0), model), vec2(3, 4));
  EXPECT_EQ(s.next(2, vec2(0, 0), model), vec2(3, 4));
  EXPECT_THROW(ExternalCommandSource::replay({}), std::invalid_argument);
}

TEST(CommandTest, LiveReadsTheLatestPublishedValue) {
  auto channel = std::make_shared<LatestValue<Vector>>();
  ExternalCommandSource s = ExternalCommandSource::live(channel, 2);
  const SystemModel model = case1_config().model;
  EXPECT_EQ(s.next(0, vec2(0, 0), model), vec2(0, 0));
  channel->publish(vec2(0.3, -0.1));
  channel->publish(vec2(0.5, 0.2));
  EXPECT_EQ(s.next(1, vec2(0, 0), model), vec2(0.5, 0.2));
}

TEST(CommandTest, DiscountedGoalRejectsBadParameters) {
  const BoxSet U = case3_config().U;
  EXPECT_THROW(ExternalCommandSource::discounted_goal(case3_goal(), 0, 0.9, U), std::invalid_argument);
  EXPECT_THROW(ExternalCommandSource::discounted_goal(case3_goal(), 5, 1.0, U), std::invalid_argument);
}

TEST(DiscountedGoalTest, AtTheTargetTheCommandVanishes) {
  const Ps2fConfig cfg = case3_config();
  const GoalCommandResult r = discounted_goal_command(cfg.model, vec3(0.5, 0.5, 0.3), case3_goal(), 5, 0.9, cfg.U);
  ASSERT_TRUE(r.solved);
  EXPECT_LE(r.u.norm(), 1e-3);
  EXPECT_LE(r.objective, 1e-9);
}

TEST(DiscountedGoalTest, TargetStraightAheadDrivesForward) {
  const Ps2fConfig cfg = case3_config();
  const GoalCommandResult r = discounted_goal_command(cfg.model, vec3(0, 0, 0), vec2(0.5, 0.0), 5, 0.9, cfg.U);
  ASSERT_TRUE(r.solved);
  EXPECT_GT(r.u(0), 0.0);
  EXPECT_NEAR(r.u(1), 0.0, 1e-6);
}

// Property: the solved objective never exceeds that of the zero sequence.
TEST(DiscountedGoalTest, ImprovesOnStandingStill) {
  Gen gen(61);
  const Ps2fConfig cfg = case3_config();
  const std::vector<Vector> zeros(5, Vector::Zero(2));
  for (int trial = 0; trial < 30; ++trial) {
    const Vector x = gen.in_box(cfg.X);
    const Vector target = vec2(gen.uniform(-1, 1), gen.uniform(-1, 1));
    const GoalCommandResult r = discounted_goal_command(cfg.model, x, target, 5, 0.9, cfg.U);
    ASSERT_TRUE(r.solved);
    EXPECT_GE(cfg.U.min_margin(r.u), -1e-9);
    EXPECT_LE(r.objective, discounted_goal_objective(cfg.model, x, target, zeros, 0.9) + 1e-9);
  }
}

TEST(ClosedLoopTest, CaseOneIsSafeAndConverges) {
  const Ps2fConfig cfg = case1_config();
  ExternalCommandSource source = ExternalCommandSource::case1_signal();
  const ClosedLoopLog log =
      run_closed_loop(cfg, case1_initial_state(), source, ModeSchedule::constant(cfg.a, cfg.M), kCase1Steps);
  EXPECT_EQ(static_cast<int>(log.steps.size()), kCase1Steps);
  EXPECT_EQ(log.violations(), 0);
  EXPECT_LE(log.x_final.norm(), 1e-2);
  EXPECT_LE(log.max_decrease_slack(), 1e-5);
  EXPECT_EQ(log.fallbacks(), 0);
}

// With a = 0 the filter returns v*(0) so the loop is plain MPC.
TEST(ClosedLoopTest, ZeroAReproducesPlainMpc) {
  const Ps2fConfig cfg = case1_config();
  ExternalCommandSource source = ExternalCommandSource::case1_signal();
  const ClosedLoopLog log = run_closed_loop(cfg, case1_initial_state(), source, ModeSchedule::constant(0.0, 2), 20);
  Vector x = case1_initial_state();
  for (int k = 0; k < 20; ++k) {
    const NominalSolution s = solve_nominal(cfg, x);
    ASSERT_TRUE(s.feasible());
    EXPECT_LT((log.steps[k].u - s.v_star[0]).norm(), 1e-5) << "k = " << k;
    x = cfg.model.step(x, s.v_star[0]);
  }
}

TEST(ClosedLoopTest, RejectsAnInitialStateOutsideX) {
  ExternalCommandSource source = ExternalCommandSource::case1_signal();
  EXPECT_THROW(run_closed_loop(case1_config(), vec2(3.0, 0.0), source, ModeSchedule::constant(0.5, 2), 5),
               std::invalid_argument);
  EXPECT_THROW(run_closed_loop(case1_config(), vec2(2.0, 2.0), source, ModeSchedule::constant(0.5, 2), 5),
               std::invalid_argument);
}

TEST(ClosedLoopTest, FailedAssertionCarriesThePartialLog) {
  ClosedLoopOptions options;
  options.decrease_tol = -1e6;
  ExternalCommandSource source = ExternalCommandSource::case1_signal();
  try {
    run_closed_loop(case1_config(), case1_initial_state(), source, ModeSchedule::constant(0.5, 2), 10, options);
    FAIL() << "expected AssertionFailure";
  } catch (const AssertionFailure& e) {
    EXPECT_NE(e.invariant().find("value decrease"), std::string::npos);
    EXPECT_EQ(e.log().steps.size(), 1u);
  }
}

TEST(ClosedLoopTest, CaseThreeFilteredStaysSafe) {
  const Ps2fConfig cfg = case3_config();
  ExternalCommandSource source = case3_command(case3_goal());
  const ClosedLoopLog log =
      run_closed_loop(cfg, Vector::Zero(3), source, case3_schedule(kCase3SwitchIndex), kCase3Steps);
  EXPECT_EQ(log.violations(), 0);
  EXPECT_EQ(heading_violations(log), 0);
  EXPECT_LE(log.x_final.head(2).norm(), 1e-2);
  EXPECT_LE(log.max_decrease_slack(kCase3SwitchIndex), 1e-5);
}

TEST(BaselineTest, UnfilteredGoalControllerViolatesHeading) {
  const ClosedLoopLog log = run_baseline_case3(kCase3SwitchIndex, kCase3Steps);
  EXPECT_EQ(log.variant, "baseline");
  EXPECT_GT(heading_violations(log), 0);
}

TEST(BaselineTest, ReturnOnlyStaysAtTheOrigin) {
  const ClosedLoopLog log = run_baseline_case3(0, 20);
  EXPECT_EQ(log.violations(), 0);
  EXPECT_LT(log.x_final.norm(), 1e-9);
}

class LogIoTest : public ::testing::Test {
 protected:
  static ClosedLoopLog short_log() {
    ExternalCommandSource source = ExternalCommandSource::case1_signal();
    return run_closed_loop(case1_config(), case1_initial_state(), source, ModeSchedule::constant(0.95, 2), 8);
  }
};

TEST_F(LogIoTest, CsvRoundTrip) {
  const ClosedLoopLog log = short_log();
  std::ostringstream out;
  write_log_csv(out, log);
  std::istringstream in(out.str());
  const std::vector<CsvLogRow> rows = read_log_csv(in);
  ASSERT_EQ(rows.size(), log.steps.size() + 1);
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    EXPECT_EQ(rows[k].k, static_cast<int>(k));
    EXPECT_EQ(rows[k].x, log.steps[k].x);
    EXPECT_EQ(rows[k].u, log.steps[k].u);
    EXPECT_EQ(rows[k].u_ext, log.steps[k].u_ext);
    EXPECT_EQ(rows[k].V, log.steps[k].V);
  }
  EXPECT_EQ(rows.back().x, log.x_final);
  EXPECT_TRUE(std::isnan(rows.back().u(0)));

  const std::string header = out.str().substr(0, out.str().find('\n'));
  std::string expected;
  for (const std::string& c : log_columns(2, 2)) expected += (expected.empty() ? "" : ",") + c;
  EXPECT_EQ(header, expected);
}

TEST_F(LogIoTest, MalformedCsvIsRejected) {
  std::istringstream bad_header("k,x1\n0,1\n");
  EXPECT_THROW(read_log_csv(bad_header), std::runtime_error);
}

TEST_F(LogIoTest, JsonLinesCarryTheSchema) {
  const ClosedLoopLog log = short_log();
  std::ostringstream out;
  write_log_jsonl(out, log);
  std::istringstream in(out.str());
  int lines = 0;
  for (std::string line; std::getline(in, line);) {
    const nlohmann::json j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("schema"), kLogSchema);
    EXPECT_EQ(j.at("k").get<int>(), lines);
    ++lines;
  }
  EXPECT_EQ(lines, static_cast<int>(log.steps.size()) + 1);
}

TEST_F(LogIoTest, RunsAreDeterministic) {
  std::ostringstream a, b;
  write_log_csv(a, short_log());
  write_log_csv(b, short_log());
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(LogIoTest, SummaryFields) {
  const nlohmann::json s = log_summary(short_log());
  EXPECT_EQ(s.at("violations").get<int>(), 0);
  EXPECT_EQ(s.at("schema"), kLogSchema);
  EXPECT_LE(s.at("max_decrease_slack").get<double>(), 1e-5);
  EXPECT_GT(s.at("final_state_norm").get<double>(), 0.0);
}

}  // namespace
}  // namespace ps2f
