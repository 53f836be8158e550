#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "gesp/criteria.hpp"
#include "gesp/envs.hpp"

namespace gesp {
namespace {

// Second cart-pole integrator, written against the textbook equations of
// motion with state packed in an array.
struct ReferenceCartPole {
  std::array<double, 4> s{};  // x, x_dot, theta, theta_dot

  bool step(int action) {
    const double g = 9.8, mc = 1.0, mp = 0.1, l = 0.5, F = action == 1 ? 10.0 : -10.0, dt = 0.02;
    const double th = s[2], w = s[3];
    const double m = mc + mp;
    const double a = (F + mp * l * w * w * std::sin(th)) / m;
    const double alpha = (g * std::sin(th) - std::cos(th) * a) / (l * (4.0 / 3.0 - mp * std::cos(th) * std::cos(th) / m));
    const double xacc = a - mp * l * alpha * std::cos(th) / m;
    s = {s[0] + dt * s[1], s[1] + dt * xacc, s[2] + dt * s[3], s[3] + dt * alpha};
    return std::abs(s[0]) > 2.4 || std::abs(s[2]) > 12.0 * std::numbers::pi / 180.0;
  }
};

TEST(CartPole, UprightStepGivesUnitReward) {
  const auto r = cartpole_step({}, CartPoleAction::Left);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_FALSE(r.terminated);
}

TEST(CartPole, ThetaBeyondLimitTerminates) {
  CartPoleState s;
  s.theta = 0.21;
  EXPECT_TRUE(cartpole_step(s, CartPoleAction::Right).terminated);
  s.theta = 0.0;
  s.x = 2.41;
  EXPECT_TRUE(cartpole_step(s, CartPoleAction::Right).terminated);
}

TEST(CartPole, NullPolicyMatchesIndependentIntegrator) {
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    CartPole env;
    env.reset(seed);
    ReferenceCartPole ref;
    const auto& s0 = env.state();
    ref.s = {s0.x, s0.x_dot, s0.theta, s0.theta_dot};

    std::size_t steps = 0, ref_steps = 0;
    double f = 0.0;
    while (true) {
      const auto sr = env.step(0.0);
      f += sr.reward;
      ++steps;
      EXPECT_EQ(f, static_cast<double>(steps));
      if (sr.terminated) break;
    }
    while (!ref.step(0)) ++ref_steps;
    ++ref_steps;
    EXPECT_EQ(steps, ref_steps) << "seed " << seed;
    EXPECT_NEAR(env.state().theta, ref.s[2], 1e-12);
  }
}

TEST(CartPole, InitialStateWithinBox) {
  CartPole env;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto obs = env.reset(seed);
    for (double v : obs) {
      EXPECT_GE(v, -0.05);
      EXPECT_LE(v, 0.05);
    }
  }
}

TEST(Pendulum, RestAtTopIsFixedPoint) {
  const auto r = pendulum_step({0.0, 0.0}, 0.0);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_EQ(r.state.theta, 0.0);
  EXPECT_EQ(r.state.omega, 0.0);
}

TEST(Pendulum, WorstCaseReward) {
  const auto r = pendulum_step({std::numbers::pi, 8.0}, 2.0);
  EXPECT_NEAR(r.reward, -16.2736044, 1e-7);
  EXPECT_DOUBLE_EQ(r.reward, -(std::numbers::pi * std::numbers::pi + 0.1 * 64.0 + 0.001 * 4.0));
}

TEST(Pendulum, TorqueIsClamped) {
  const auto a = pendulum_step({1.0, 0.5}, 7.0);
  const auto b = pendulum_step({1.0, 0.5}, 2.0);
  EXPECT_EQ(a.reward, b.reward);
  EXPECT_EQ(a.state.omega, b.state.omega);
}

TEST(Pendulum, RewardBoundsOverStateGrid) {
  const double pi = std::numbers::pi;
  const double worst = -(pi * pi + 0.1 * 64.0 + 0.001 * 4.0);
  for (int i = 0; i <= 64; ++i) {
    for (int j = 0; j <= 32; ++j) {
      for (int k = 0; k <= 8; ++k) {
        const PendulumState s{-pi + 2.0 * pi * i / 64.0, -8.0 + 16.0 * j / 32.0};
        const double u = -2.0 + 4.0 * k / 8.0;
        const auto r = pendulum_step(s, u);
        EXPECT_LE(r.reward, 0.0);
        EXPECT_GE(r.reward, worst);
        EXPECT_LE(std::abs(r.state.omega), 8.0);
        EXPECT_LE(std::abs(r.state.theta), pi);
      }
    }
  }
}

TEST(Pendulum, ZeroTorqueFromBottomDecreasesMonotonically) {
  Pendulum env;
  env.reset(0);
  env.set_state({std::numbers::pi, 0.0});
  double f = 0.0, prev = 0.0;
  for (int t = 0; t < 200; ++t) {
    f += env.step(0.0).reward;
    EXPECT_LT(f, prev);
    prev = f;
  }
}

TEST(Pendulum, NeverTerminatesNaturally) {
  Pendulum env;
  env.reset(4);
  for (int t = 0; t < 200; ++t) EXPECT_FALSE(env.step(1.0).terminated);
}

TEST(Pendulum, AngleNormalization) {
  const double pi = std::numbers::pi;
  EXPECT_EQ(normalize_angle(pi), pi);
  EXPECT_EQ(normalize_angle(-pi), -pi);
  EXPECT_NEAR(normalize_angle(3.0 * pi), pi, 1e-12);
  EXPECT_NEAR(normalize_angle(2.0 * pi + 0.5), 0.5, 1e-12);
  EXPECT_NEAR(normalize_angle(-2.0 * pi - 0.5), -0.5, 1e-12);
}

TEST(SyntheticRamp, CumulativeIsExactMultiple) {
  SyntheticRamp env(-16.27, 1000);
  env.reset(0);
  double f = 0.0;
  for (int t = 1; t <= 1000; ++t) {
    f += env.step(0.0).reward;
    EXPECT_NEAR(f, -16.27 * t, 1e-9 * t);
  }
}

TEST(Registry, KnownIds) {
  EXPECT_EQ(make_environment("cartpole")->t_max(), 500u);
  EXPECT_EQ(make_environment("pendulum")->t_max(), 200u);
  const auto ramp = make_environment("ramp:-1.5:40");
  EXPECT_EQ(ramp->t_max(), 40u);
  EXPECT_EQ(ramp->id(), "ramp:-1.5:40");
  EXPECT_THROW(make_environment("mountaincar"), std::invalid_argument);
  EXPECT_THROW(make_environment("ramp:x:10"), std::invalid_argument);
  EXPECT_THROW(make_environment("ramp:1:0"), std::invalid_argument);
}

TEST(Criteria, NoProgressFiresOnFlatPrefix) {
  const std::vector<double> flat(51, 3.0);
  EXPECT_TRUE(evaluate_criterion(NoProgress{50}, flat, {}));
}

TEST(Criteria, NoProgressSilentWhileIncreasing) {
  std::vector<double> inc;
  for (int t = 1; t <= 300; ++t) {
    inc.push_back(t);
    EXPECT_FALSE(evaluate_criterion(NoProgress{50}, inc, {}));
  }
}

TEST(Criteria, NoProgressNeedsFullWindow) {
  std::vector<double> v{1, 2, 3, 3, 3};
  EXPECT_FALSE(evaluate_criterion(NoProgress{3}, std::span(v).first(4), {}));
  EXPECT_TRUE(evaluate_criterion(NoProgress{2}, std::span(v).first(5), {}));
}

TEST(Criteria, SpeedFloorWorkedExample) {
  const std::vector<double> v{0.05, 0.10, 0.11};
  EXPECT_FALSE(evaluate_criterion(SpeedFloor{0.04}, std::span(v).first(1), {}));
  EXPECT_FALSE(evaluate_criterion(SpeedFloor{0.04}, std::span(v).first(2), {}));
  EXPECT_TRUE(evaluate_criterion(SpeedFloor{0.04}, v, {}));
}

TEST(Criteria, HealthyBounds) {
  const std::vector<double> f{1.0};
  const std::vector<double> inside{0.0, 0.5};
  const std::vector<double> outside{0.0, 1.5};
  const HealthyBounds hb{1, 0.2, 1.0};
  EXPECT_FALSE(evaluate_criterion(hb, f, inside));
  EXPECT_TRUE(evaluate_criterion(hb, f, outside));
  EXPECT_THROW(evaluate_criterion(HealthyBounds{5, 0, 1}, f, inside), std::out_of_range);
}

TEST(Criteria, Parsing) {
  EXPECT_EQ(std::get<NoProgress>(parse_criterion("noprogress:50")).window, 50u);
  const auto hb = std::get<HealthyBounds>(parse_criterion("bounds:2:0.2:1"));
  EXPECT_EQ(hb.state_index, 2u);
  EXPECT_EQ(hb.low, 0.2);
  EXPECT_EQ(hb.high, 1.0);
  EXPECT_EQ(std::get<SpeedFloor>(parse_criterion("speedfloor:0.04")).rate, 0.04);
  EXPECT_THROW(parse_criterion("bounds:1:2:1"), std::invalid_argument);
  EXPECT_THROW(parse_criterion("jump:3"), std::invalid_argument);
  EXPECT_THROW(parse_criterion("noprogress:-1"), std::invalid_argument);
}

}  // namespace
}  // namespace gesp
