#pragma once

// Deterministic classic-control environments and a synthetic ramp.
//
// Dynamics constants follow the widely used gym reference implementations:
//   cart-pole: g=9.8, m_cart=1.0, m_pole=0.1, half-length=0.5, force=10,
//              dt=0.02 (explicit Euler), t_max=500
//   pendulum:  g=10, m=1, l=1, dt=0.05, |omega|<=8, |torque|<=2, t_max=200

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gesp/core.hpp"
#include "gesp/criteria.hpp"
#include "gesp/format.hpp"

namespace gesp {

namespace detail {

class EpisodeGuard {
 public:
  void start() {
    active_ = true;
    steps_ = 0;
  }
  void before_step(std::size_t t_max) const {
    if (!active_ || steps_ >= t_max) throw std::logic_error("step called on an inactive episode");
  }
  void after_step(bool terminated) {
    ++steps_;
    if (terminated) active_ = false;
  }
  std::size_t steps() const { return steps_; }

 private:
  bool active_ = false;
  std::size_t steps_ = 0;
};

}  // namespace detail

struct CartPoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
};

enum class CartPoleAction { Left = 0, Right = 1 };

struct CartPoleStep {
  CartPoleState state;
  double reward = 1.0;
  bool terminated = false;
};

inline constexpr double kCartPoleThetaLimit = 12.0 * 2.0 * std::numbers::pi / 360.0;
inline constexpr double kCartPoleXLimit = 2.4;

inline CartPoleStep cartpole_step(const CartPoleState& s, CartPoleAction action) {
  constexpr double gravity = 9.8;
  constexpr double masscart = 1.0;
  constexpr double masspole = 0.1;
  constexpr double total_mass = masscart + masspole;
  constexpr double length = 0.5;
  constexpr double polemass_length = masspole * length;
  constexpr double force_mag = 10.0;
  constexpr double tau = 0.02;

  const double force = action == CartPoleAction::Right ? force_mag : -force_mag;
  const double costheta = std::cos(s.theta);
  const double sintheta = std::sin(s.theta);
  const double temp = (force + polemass_length * s.theta_dot * s.theta_dot * sintheta) / total_mass;
  const double thetaacc = (gravity * sintheta - costheta * temp) /
                          (length * (4.0 / 3.0 - masspole * costheta * costheta / total_mass));
  const double xacc = temp - polemass_length * thetaacc * costheta / total_mass;

  CartPoleStep out;
  out.state.x = s.x + tau * s.x_dot;
  out.state.x_dot = s.x_dot + tau * xacc;
  out.state.theta = s.theta + tau * s.theta_dot;
  out.state.theta_dot = s.theta_dot + tau * thetaacc;
  out.terminated = out.state.x < -kCartPoleXLimit || out.state.x > kCartPoleXLimit ||
                   out.state.theta < -kCartPoleThetaLimit || out.state.theta > kCartPoleThetaLimit;
  out.reward = 1.0;
  return out;
}

class CartPole final : public Environment {
 public:
  explicit CartPole(std::size_t t_max = 500) : t_max_(t_max) {}

  std::string id() const override { return "cartpole"; }
  std::size_t observation_dim() const override { return 4; }
  ActionSpec action_spec() const override { return {ActionKind::Binary, 1.0}; }
  std::size_t t_max() const override { return t_max_; }

  Observation reset(std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    state_.x = u(rng);
    state_.x_dot = u(rng);
    state_.theta = u(rng);
    state_.theta_dot = u(rng);
    guard_.start();
    return observe();
  }

  StepResult step(double action) override {
    guard_.before_step(t_max_);
    const auto r = cartpole_step(state_, action >= 0.5 ? CartPoleAction::Right : CartPoleAction::Left);
    state_ = r.state;
    guard_.after_step(r.terminated);
    return {observe(), r.reward, r.terminated};
  }

  const CartPoleState& state() const { return state_; }
  void set_state(const CartPoleState& s) { state_ = s; }

 private:
  Observation observe() const { return {state_.x, state_.x_dot, state_.theta, state_.theta_dot}; }

  std::size_t t_max_;
  CartPoleState state_;
  detail::EpisodeGuard guard_;
};

struct PendulumState {
  double theta = 0.0;  // 0 = upright
  double omega = 0.0;
};

struct PendulumStep {
  PendulumState state;
  double reward = 0.0;
};

inline constexpr double kPendulumMaxSpeed = 8.0;
inline constexpr double kPendulumMaxTorque = 2.0;

// Wraps into [-pi, pi]; +pi stays +pi.
inline double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  if (a >= -pi && a <= pi) return a;
  double r = std::fmod(a + pi, 2.0 * pi);
  if (r < 0.0) r += 2.0 * pi;
  r -= pi;
  return r == -pi ? pi : r;
}

inline double pendulum_reward(const PendulumState& s, double torque) {
  const double th = normalize_angle(s.theta);
  return -(th * th + 0.1 * s.omega * s.omega + 0.001 * torque * torque);
}

// Torque outside [-2, 2] is clamped.
inline PendulumStep pendulum_step(const PendulumState& s, double torque) {
  constexpr double g = 10.0;
  constexpr double m = 1.0;
  constexpr double l = 1.0;
  constexpr double dt = 0.05;

  const double u = std::clamp(torque, -kPendulumMaxTorque, kPendulumMaxTorque);
  PendulumStep out;
  out.reward = pendulum_reward(s, u);
  double omega = s.omega + (3.0 * g / (2.0 * l) * std::sin(s.theta) + 3.0 / (m * l * l) * u) * dt;
  omega = std::clamp(omega, -kPendulumMaxSpeed, kPendulumMaxSpeed);
  out.state.omega = omega;
  out.state.theta = normalize_angle(s.theta + omega * dt);
  return out;
}

class Pendulum final : public Environment {
 public:
  explicit Pendulum(std::size_t t_max = 200) : t_max_(t_max) {}

  std::string id() const override { return "pendulum"; }
  std::size_t observation_dim() const override { return 3; }
  ActionSpec action_spec() const override { return {ActionKind::Continuous, kPendulumMaxTorque}; }
  std::size_t t_max() const override { return t_max_; }

  Observation reset(std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    state_.theta = angle(rng);
    state_.omega = speed(rng);
    guard_.start();
    return observe();
  }

  StepResult step(double action) override {
    guard_.before_step(t_max_);
    const auto r = pendulum_step(state_, action);
    state_ = r.state;
    guard_.after_step(false);
    return {observe(), r.reward, false};
  }

  const PendulumState& state() const { return state_; }
  void set_state(const PendulumState& s) { state_ = s; }

 private:
  Observation observe() const { return {std::cos(state_.theta), std::sin(state_.theta), state_.omega}; }

  std::size_t t_max_;
  PendulumState state_;
  detail::EpisodeGuard guard_;
};

// Constant reward per step regardless of seed or action: f[t] = r * t.
class SyntheticRamp final : public Environment {
 public:
  SyntheticRamp(double per_step_reward, std::size_t t_max) : reward_(per_step_reward), t_max_(t_max) {
    if (t_max == 0) throw std::invalid_argument("ramp: t_max must be positive");
  }

  std::string id() const override {
    return "ramp:" + format_number(reward_) + ":" + std::to_string(t_max_);
  }
  std::size_t observation_dim() const override { return 1; }
  ActionSpec action_spec() const override { return {ActionKind::Continuous, 1.0}; }
  std::size_t t_max() const override { return t_max_; }
  double per_step_reward() const { return reward_; }

  Observation reset(std::uint64_t) override {
    guard_.start();
    return {0.0};
  }

  StepResult step(double) override {
    guard_.before_step(t_max_);
    guard_.after_step(false);
    return {{static_cast<double>(guard_.steps()) / static_cast<double>(t_max_)}, reward_, false};
  }

 private:
  double reward_;
  std::size_t t_max_;
  detail::EpisodeGuard guard_;
};

// Builds an environment from its registry id: "cartpole", "pendulum",
// "ramp:<reward>:<tmax>". Throws std::invalid_argument on unknown ids.
inline EnvironmentPtr make_environment(std::string_view id) {
  if (id == "cartpole") return std::make_unique<CartPole>();
  if (id == "pendulum") return std::make_unique<Pendulum>();
  const auto parts = detail::split(id, ':');
  if (parts.size() == 3 && parts[0] == "ramp") {
    const double r = detail::parse_double(parts[1]);
    const std::size_t t_max = detail::parse_size(parts[2]);
    if (!std::isfinite(r)) throw std::invalid_argument("ramp: reward must be finite");
    return std::make_unique<SyntheticRamp>(r, t_max);
  }
  throw std::invalid_argument("unknown environment id: '" + std::string(id) + "'");
}

}  // namespace gesp
