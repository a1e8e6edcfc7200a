#include "apo/envs.hpp"

#include "apo/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace apo {

namespace {

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  const auto n = probs.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  // Round-off: fall back to the last state with positive mass.
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (probs(i) > 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(n - 1);
}

}  // namespace

TabularEnv::TabularEnv(Mdp mdp, std::mt19937_64 rng) : mdp_(std::move(mdp)), rng_(rng) {
  if (!validate_mdp(mdp_).ok()) throw std::invalid_argument("TabularEnv: MDP fails validation");
}

Eigen::VectorXd TabularEnv::reset() {
  state_ = sample_index(mdp_.init_dist.transpose(), rng_);
  return observation();
}

StepResult TabularEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != 1) throw std::out_of_range("TabularEnv: expected a single action index");
  const double a = action(0);
  if (!std::isfinite(a) || a != std::floor(a)) {
    throw std::out_of_range("TabularEnv: action is not an integer index");
  }
  return step(static_cast<int>(a));
}

StepResult TabularEnv::step(int action) {
  if (action < 0 || action >= mdp_.n_actions) {
    throw std::out_of_range("TabularEnv: action " + std::to_string(action) + " out of range");
  }
  const double reward = mdp_.reward(state_, action);
  state_ = sample_index(mdp_.row(state_, action), rng_);
  return {observation(), reward, {{"state", static_cast<double>(state_)}}};
}

Eigen::VectorXd TabularEnv::observation() const {
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(mdp_.n_states);
  obs(state_) = 1.0;
  return obs;
}

void TabularEnv::set_state(int s) {
  if (s < 0 || s >= mdp_.n_states) throw std::out_of_range("TabularEnv: state out of range");
  state_ = s;
}

std::unique_ptr<TabularEnv> tabular_env(const Mdp& mdp, std::mt19937_64 rng) {
  return std::make_unique<TabularEnv>(mdp, rng);
}

Mdp make_two_loop() {
  Mdp mdp(4, 2);
  mdp.p(0, kTwoLoopShort, 0) = 1.0;
  mdp.reward(0, kTwoLoopShort) = 0.22;
  mdp.p(0, kTwoLoopLong, 1) = 1.0;
  for (int a = 0; a < 2; ++a) {
    mdp.p(1, a, 2) = 1.0;
    mdp.p(2, a, 3) = 1.0;
    mdp.p(3, a, 0) = 1.0;
    mdp.reward(3, a) = 1.0;
  }
  mdp.init_dist = Eigen::VectorXd::Unit(4, 0);
  return mdp;
}

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(theta + std::numbers::pi, two_pi);
  if (wrapped < 0.0) wrapped += two_pi;
  wrapped -= std::numbers::pi;
  // fmod maps +pi to -pi; the interval is closed on the right.
  return wrapped == -std::numbers::pi ? std::numbers::pi : wrapped;
}

PendulumEnv::PendulumEnv(std::mt19937_64 rng) : rng_(rng) {}

Eigen::VectorXd PendulumEnv::reset() {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  theta_ = angle(rng_);
  theta_dot_ = speed(rng_);
  return observation();
}

StepResult PendulumEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != 1) throw std::invalid_argument("PendulumEnv: expected a 1-d torque");
  return step(action(0));
}

StepResult PendulumEnv::step(double torque) {
  if (!std::isfinite(torque)) throw std::invalid_argument("PendulumEnv: non-finite torque");
  const double u = std::clamp(torque, -kMaxTorque, kMaxTorque);
  const double angle = wrap_angle(theta_);
  const double reward = -(angle * angle + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);

  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                       3.0 * u / (kMass * kLength * kLength);
  theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
  theta_ += theta_dot_ * kDt;
  return {observation(), reward, {{"theta", theta_}, {"theta_dot", theta_dot_}, {"torque", u}}};
}

Eigen::VectorXd PendulumEnv::observation() const {
  return Eigen::Vector3d(std::cos(theta_), std::sin(theta_), theta_dot_);
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  if (!std::isfinite(theta) || !std::isfinite(theta_dot)) {
    throw std::invalid_argument("PendulumEnv: non-finite state");
  }
  theta_ = theta;
  theta_dot_ = theta_dot;
}

std::unique_ptr<PendulumEnv> make_pendulum(std::mt19937_64 rng) {
  return std::make_unique<PendulumEnv>(rng);
}

EnvFactory env_factory(const std::string& name) {
  if (name == "twostate") {
    return [](std::mt19937_64 rng) { return std::unique_ptr<Environment>(tabular_env(make_two_state(), rng)); };
  }
  if (name == "twoloop") {
    return [](std::mt19937_64 rng) { return std::unique_ptr<Environment>(tabular_env(make_two_loop(), rng)); };
  }
  if (name == "pendulum") {
    return [](std::mt19937_64 rng) { return std::unique_ptr<Environment>(make_pendulum(rng)); };
  }
  if (name.rfind("file:", 0) == 0) {
    const Mdp mdp = read_mdp_file(name.substr(5));
    return [mdp](std::mt19937_64 rng) { return std::unique_ptr<Environment>(tabular_env(mdp, rng)); };
  }
  throw std::invalid_argument("unknown environment '" + name +
                              "' (expected twostate, twoloop, pendulum or file:<path>)");
}

}  // namespace apo
