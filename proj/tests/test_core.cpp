#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "ps2f/core/channels.hpp"
#include "ps2f/core/config_io.hpp"
#include "ps2f/core/types.hpp"
#include "ps2f/core/validation.hpp"
#include "ps2f/opt/nlp.hpp"
#include "ps2f/sim/case_studies.hpp"
#include "test_util.hpp"

namespace ps2f {
namespace {

using testing::Gen;
using testing::vec2;
using testing::vec3;

TEST(BoxSetTest, MarginsAreInterleavedPerDimension) {
  const BoxSet box{vec2(-1.0, -2.0), vec2(1.0, 3.0)};
  const Vector m = box.margins(vec2(0.5, -2.5));
  ASSERT_EQ(m.size(), 4);
  EXPECT_DOUBLE_EQ(m(0), 1.5);
  EXPECT_DOUBLE_EQ(m(1), 0.5);
  EXPECT_DOUBLE_EQ(m(2), -0.5);
  EXPECT_DOUBLE_EQ(m(3), 5.5);
  EXPECT_FALSE(box.contains(vec2(0.5, -2.5)));
  EXPECT_TRUE(box.contains(vec2(0.5, -2.5), 0.5));
  EXPECT_TRUE(box.clamp(vec2(4.0, -9.0)).isApprox(vec2(1.0, -2.0)));
}

TEST(SystemModelTest, LinearStepMatchesMatrices) {
  const SystemModel f = SystemModel::linear((Matrix(2, 2) << 1, 1, 0, 1).finished(), Matrix::Identity(2, 2));
  EXPECT_TRUE(f.step(vec2(2, -2), vec2(0.5, 0.25)).isApprox(vec2(0.5, -1.75)));
  EXPECT_THROW(SystemModel::linear(Matrix::Identity(2, 2), Matrix::Identity(3, 1)), std::invalid_argument);
}

TEST(SystemModelTest, UnicycleForwardEuler) {
  const SystemModel f = SystemModel::unicycle(0.2);
  const Vector x = vec3(0.1, -0.2, 0.3);
  const Vector u = vec2(2.0, -1.0);
  const Vector expected = vec3(0.1 + 0.2 * 2.0 * std::cos(0.3), -0.2 + 0.2 * 2.0 * std::sin(0.3), 0.3 - 0.2);
  EXPECT_LT((f.step(x, u) - expected).norm(), 1e-15);
}

// Property: analytic Jacobians agree with central differences of step().
TEST(SystemModelTest, JacobiansMatchFiniteDifferences) {
  Gen gen(11);
  const SystemModel f = SystemModel::unicycle(0.2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = gen.normal(3);
    const Vector u = gen.normal(2);
    Matrix fx, fu;
    f.linearize(x, u, &fx, &fu);
    const Matrix fx_fd = opt::finite_difference_jacobian([&](const Vector& z) { return f.step(z, u); }, x);
    const Matrix fu_fd = opt::finite_difference_jacobian([&](const Vector& v) { return f.step(x, v); }, u);
    EXPECT_LT((fx - fx_fd).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_LT((fu - fu_fd).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

// Property: the weighted Hessian is the Jacobian of the weighted gradient.
TEST(SystemModelTest, WeightedHessianMatchesFiniteDifferences) {
  Gen gen(12);
  const SystemModel f = SystemModel::unicycle(0.2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = gen.normal(3);
    const Vector u = gen.normal(2);
    const Vector w = gen.normal(3);
    auto grad = [&](const Vector& z) {
      Matrix fx, fu;
      f.linearize(z.head(3), z.tail(2), &fx, &fu);
      Matrix J(3, 5);
      J << fx, fu;
      return Vector(J.transpose() * w);
    };
    Vector z(5);
    z << x, u;
    const Matrix H_fd = opt::finite_difference_jacobian(grad, z);
    EXPECT_LT((f.weighted_hessian(x, u, w) - H_fd).lpNorm<Eigen::Infinity>(), 1e-7);
  }
}

TEST(TerminalSetTest, Membership) {
  const TerminalSet e = TerminalSet::ellipsoid(2.0 * Matrix::Identity(2, 2), 2.0);
  EXPECT_TRUE(e.contains(vec2(1.0, 0.0), 0.0));
  EXPECT_FALSE(e.contains(vec2(1.0, 0.1), 0.0));
  EXPECT_TRUE(TerminalSet::origin().contains(vec2(0.0, 1e-12), 1e-9));
  EXPECT_FALSE(TerminalSet::origin().contains(vec2(0.0, 1e-6), 1e-9));
  EXPECT_TRUE(TerminalSet::none().contains(vec2(1e6, 1e6), 0.0));
}

TEST(ValidationTest, CaseStudyConfigsAreValid) {
  EXPECT_TRUE(validate_config(case1_config()).ok()) << validate_config(case1_config()).summary();
  EXPECT_TRUE(validate_config(case3_config()).ok()) << validate_config(case3_config()).summary();
}

TEST(ValidationTest, HorizonViolation) {
  Ps2fConfig cfg = case1_config();
  cfg.M = cfg.N + 1;
  EXPECT_TRUE(validate_config(cfg).has(ViolationCode::kHorizon));
}

TEST(ValidationTest, OriginOutsideInputSet) {
  Ps2fConfig cfg = case1_config();
  cfg.U = BoxSet::uniform(2, 0.5, 1.0);
  EXPECT_TRUE(validate_config(cfg).has(ViolationCode::kNotCSet));
}

TEST(ValidationTest, UncontrollablePair) {
  Ps2fConfig cfg = case1_config();
  cfg.model = SystemModel::linear((Matrix(2, 2) << 1, 0, 0, 1).finished(), (Matrix(2, 2) << 1, 0, 0, 0).finished());
  EXPECT_TRUE(validate_config(cfg).has(ViolationCode::kUncontrollable));
  EXPECT_EQ(controllability_rank(cfg.model.A(), cfg.model.B()), 1);
}

TEST(ValidationTest, NegativeAAndIndefiniteWeights) {
  Ps2fConfig cfg = case1_config();
  cfg.a = -0.1;
  cfg.cost.R = -Matrix::Identity(2, 2);
  const ValidationReport r = validate_config(cfg);
  EXPECT_TRUE(r.has(ViolationCode::kNegativeA));
  EXPECT_TRUE(r.has(ViolationCode::kInputWeightNotPd));
}

TEST(ValidationTest, EllipsoidSamplesLieOnTheBoundary) {
  const Ps2fConfig cfg = case1_config();
  for (const Vector& x : ellipsoid_boundary_samples(cfg.Xf.P, cfg.Xf.gamma, 32)) {
    EXPECT_NEAR(x.dot(cfg.Xf.P * x), cfg.Xf.gamma, 1e-9);
  }
}

TEST(ConfigIoTest, RoundTripPreservesEveryField) {
  for (const Ps2fConfig& cfg : {case1_config(), case3_config()}) {
    const Ps2fConfig back = config_from_json(config_to_json(cfg));
    EXPECT_EQ(config_to_json(back), config_to_json(cfg));
    EXPECT_EQ(back.model.kind(), cfg.model.kind());
    EXPECT_EQ(back.N, cfg.N);
    EXPECT_EQ(back.M, cfg.M);
  }
}

TEST(ConfigIoTest, StrictParsing) {
  nlohmann::json doc = config_to_json(case1_config());
  nlohmann::json extra = doc;
  extra["unexpected"] = 1;
  EXPECT_THROW(config_from_json(extra), ConfigError);

  nlohmann::json ragged = doc;
  ragged["model"]["A"] = {{1.0, 1.0}, {0.0}};
  EXPECT_THROW(config_from_json(ragged), ConfigError);

  nlohmann::json missing = doc;
  missing.erase("U");
  EXPECT_THROW(config_from_json(missing), ConfigError);

  nlohmann::json text = doc;
  text["a"] = "0.95";
  EXPECT_THROW(config_from_json(text), ConfigError);

  EXPECT_THROW(load_config("/nonexistent/ps2f.json"), ConfigError);
}

TEST(ModeScheduleTest, TwoPhase) {
  const ModeSchedule s = ModeSchedule::two_phase(100.0, 0.5, 30, 5);
  EXPECT_EQ(s.a_at(0), 100.0);
  EXPECT_EQ(s.a_at(29), 100.0);
  EXPECT_EQ(s.a_at(30), 0.5);
  EXPECT_EQ(s.a_at(1000), 0.5);
  EXPECT_EQ(s.M_at(77), 5);
  EXPECT_EQ(s.a_min(), 0.5);
  EXPECT_EQ(s.a_max(), 100.0);
  EXPECT_EQ(s.a_sup_after_switch(), 0.5);
  EXPECT_EQ(s.switch_index(), 30);
}

TEST(ModeScheduleTest, RejectsInvalidPieces) {
  EXPECT_THROW(ModeSchedule::from_pieces({}, 0), std::invalid_argument);
  EXPECT_THROW(ModeSchedule::from_pieces({{3, 0.5, 2}}, 0), std::invalid_argument);
  EXPECT_THROW(ModeSchedule::constant(-1.0, 2), std::invalid_argument);
  EXPECT_THROW(ModeSchedule::constant(0.5, 0), std::invalid_argument);
}

TEST(ChannelsTest, LatestValueKeepsOnlyTheNewest) {
  LatestValue<int> slot;
  EXPECT_FALSE(slot.latest().has_value());
  slot.publish(1);
  slot.publish(2);
  EXPECT_EQ(*slot.latest(), 2);
  EXPECT_EQ(slot.version(), 2u);
  slot.clear();
  EXPECT_FALSE(slot.latest().has_value());
  EXPECT_EQ(slot.version(), 3u);
}

TEST(ChannelsTest, DropOldestQueueDiscardsFromTheFront) {
  DropOldestQueue<int> q(3);
  for (int i = 0; i < 5; ++i) q.push(i);
  EXPECT_EQ(q.size(), 3u);
  EXPECT_EQ(q.dropped(), 2u);
  EXPECT_EQ(*q.pop(), 2);
  EXPECT_EQ(*q.pop(), 3);
  EXPECT_EQ(*q.pop(), 4);
  EXPECT_FALSE(q.pop().has_value());
}

// Property: under a concurrent producer the consumer sees a nondecreasing
// sequence and, at the end, the final value.
TEST(ChannelsTest, LatestValueUnderConcurrency) {
  LatestValue<int> slot;
  constexpr int kCount = 20000;
  std::thread producer([&] {
    for (int i = 1; i <= kCount; ++i) slot.publish(i);
  });
  int last = 0;
  bool monotone = true;
  while (last < kCount) {
    if (const auto v = slot.latest()) {
      monotone = monotone && *v >= last;
      last = *v;
    }
  }
  producer.join();
  EXPECT_TRUE(monotone);
  EXPECT_EQ(*slot.latest(), kCount);
}

}  // namespace
}  // namespace ps2f
