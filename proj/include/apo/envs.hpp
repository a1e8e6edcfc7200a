#pragma once

#include "apo/mdp.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>

namespace apo {

enum class ActionKind { Discrete, Continuous };

struct ActionSpace {
  ActionKind kind = ActionKind::Discrete;
  int size = 1;  // number of actions (discrete) or action dimension (continuous)
  double low = 0.0;
  double high = 0.0;
};

/// No terminal flag: every environment here is a continuing task.
struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  std::map<std::string, double> info;
};

/// Discrete actions are passed as a length-1 vector holding the action index.
class Environment {
 public:
  virtual ~Environment() = default;
  [[nodiscard]] virtual int observation_dim() const = 0;
  [[nodiscard]] virtual ActionSpace action_space() const = 0;
  virtual Eigen::VectorXd reset() = 0;
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
  [[nodiscard]] virtual Eigen::VectorXd observation() const = 0;
};

/// Samples a finite MDP: s0 ~ d0, s' ~ P(.|s,a), reward r(s,a), one-hot observations.
class TabularEnv final : public Environment {
 public:
  TabularEnv(Mdp mdp, std::mt19937_64 rng);

  [[nodiscard]] int observation_dim() const override { return mdp_.n_states; }
  [[nodiscard]] ActionSpace action_space() const override {
    return {ActionKind::Discrete, mdp_.n_actions, 0.0, static_cast<double>(mdp_.n_actions - 1)};
  }
  Eigen::VectorXd reset() override;
  StepResult step(const Eigen::VectorXd& action) override;
  StepResult step(int action);
  [[nodiscard]] Eigen::VectorXd observation() const override;

  [[nodiscard]] int state() const { return state_; }
  void set_state(int s);
  [[nodiscard]] const Mdp& mdp() const { return mdp_; }

 private:
  Mdp mdp_;
  std::mt19937_64 rng_;
  int state_ = 0;
};

std::unique_ptr<TabularEnv> tabular_env(const Mdp& mdp, std::mt19937_64 rng);

/**
 * Four states. In state 0, SHORT (action 0) self-loops with reward 0.22 and
 * LONG (action 1) moves to state 1 with reward 0. States 1, 2, 3 ignore the
 * action: 1 -> 2 -> 3 with reward 0, then 3 -> 0 with reward 1. Starts in 0.
 *
 * Always-LONG earns 0.25 per step and always-SHORT 0.22, while at gamma = 0.9
 * the discounted value of state 0 favours SHORT: 0.22 / (1 - gamma) = 2.2
 * against gamma^3 / (1 - gamma^4) ~ 2.12. The two cross near gamma ~ 0.921,
 * so any reward in roughly (0.212, 0.25) separates the criteria.
 */
Mdp make_two_loop();

inline constexpr int kTwoLoopShort = 0;
inline constexpr int kTwoLoopLong = 1;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Classic torque-limited pendulum with theta = 0 upright, run without terminals.
class PendulumEnv final : public Environment {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;

  explicit PendulumEnv(std::mt19937_64 rng);

  [[nodiscard]] int observation_dim() const override { return 3; }
  [[nodiscard]] ActionSpace action_space() const override {
    return {ActionKind::Continuous, 1, -kMaxTorque, kMaxTorque};
  }
  Eigen::VectorXd reset() override;
  StepResult step(const Eigen::VectorXd& action) override;
  StepResult step(double torque);
  /// (cos theta, sin theta, theta_dot)
  [[nodiscard]] Eigen::VectorXd observation() const override;

  [[nodiscard]] double theta() const { return theta_; }
  [[nodiscard]] double theta_dot() const { return theta_dot_; }
  void set_state(double theta, double theta_dot);

 private:
  std::mt19937_64 rng_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

std::unique_ptr<PendulumEnv> make_pendulum(std::mt19937_64 rng);

using EnvFactory = std::function<std::unique_ptr<Environment>(std::mt19937_64 rng)>;

/// Resolves `twostate`, `twoloop`, `pendulum` or `file:<path>` (an MDP file).
EnvFactory env_factory(const std::string& name);

}  // namespace apo
