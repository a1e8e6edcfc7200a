#include "support.hpp"

#include "apo/envs.hpp"

#include <cmath>
#include <numbers>

using namespace apo;

TEST_CASE("TwoLoop average rewards") {
  const Mdp loop = make_two_loop();
  CHECK(validate_mdp(loop).ok());
  const TabularPolicy long_pi = TabularPolicy::deterministic({kTwoLoopLong, 0, 0, 0}, 2);
  CHECK(average_reward(loop, long_pi) == doctest::Approx(0.25).epsilon(1e-14));
  // Always-SHORT leaves states 1..3 transient, which average_reward handles.
  const TabularPolicy short_pi = TabularPolicy::deterministic({kTwoLoopShort, 0, 0, 0}, 2);
  CHECK(average_reward(loop, short_pi) == doctest::Approx(0.22).epsilon(1e-14));
}

TEST_CASE("TwoLoop separates the discounted and average criteria") {
  const Mdp loop = make_two_loop();
  CHECK(discounted_policy_iteration(loop, 0.9).actions[0] == kTwoLoopShort);
  CHECK(discounted_policy_iteration(loop, 0.99).actions[0] == kTwoLoopLong);
  const OptimalPolicy avg = average_policy_iteration(loop);
  CHECK(avg.actions[0] == kTwoLoopLong);
  CHECK(avg.value == doctest::Approx(0.25).epsilon(1e-14));

  const double g = 0.9;
  const Eigen::VectorXd v_short =
      discounted_values(loop, TabularPolicy::deterministic({kTwoLoopShort, 0, 0, 0}, 2), g);
  const Eigen::VectorXd v_long = discounted_values(loop, TabularPolicy::deterministic({kTwoLoopLong, 0, 0, 0}, 2), g);
  CHECK(v_short(0) == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(v_long(0) == doctest::Approx(g * g * g / (1.0 - g * g * g * g)).epsilon(1e-12));
}

TEST_CASE("TabularEnv follows a deterministic loop") {
  auto env = tabular_env(make_two_loop(), std::mt19937_64(1));
  const Eigen::VectorXd obs = env->reset();
  CHECK(obs == Eigen::VectorXd::Unit(4, 0));
  const int expected_states[] = {1, 2, 3, 0, 1, 2, 3, 0};
  const double expected_rewards[] = {0, 0, 0, 1, 0, 0, 0, 1};
  for (int t = 0; t < 8; ++t) {
    const StepResult res = env->step(kTwoLoopLong);
    CHECK(env->state() == expected_states[t]);
    CHECK(res.reward == expected_rewards[t]);
    CHECK(res.observation == Eigen::VectorXd::Unit(4, expected_states[t]));
    CHECK(res.info.at("state") == expected_states[t]);
  }
  env->set_state(0);
  CHECK(env->step(kTwoLoopShort).reward == doctest::Approx(0.22));
  CHECK(env->state() == 0);
}

TEST_CASE("TabularEnv rejects bad actions") {
  auto env = tabular_env(make_two_state(), std::mt19937_64(1));
  env->reset();
  CHECK_THROWS_AS(env->step(2), std::out_of_range);
  CHECK_THROWS_AS(env->step(-1), std::out_of_range);
  CHECK_THROWS_AS(env->step(Eigen::VectorXd::Constant(1, 0.5)), std::out_of_range);
  CHECK_THROWS_AS(env->set_state(5), std::out_of_range);
}

TEST_CASE("TabularEnv transition frequencies match the MDP") {
  std::mt19937_64 gen(3);
  const Mdp mdp = random_ergodic_mdp(gen, 3, 2);
  auto env = tabular_env(mdp, std::mt19937_64(4));
  env->reset();
  constexpr int kSamples = 40000;
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  for (int k = 0; k < kSamples; ++k) {
    env->set_state(1);
    env->step(1);
    counts(env->state()) += 1.0;
  }
  for (int s = 0; s < 3; ++s) {
    const double p = mdp.p(1, 1, s);
    const double sd = std::sqrt(p * (1.0 - p) / kSamples);
    CHECK(std::abs(counts(s) / kSamples - p) <= 5.0 * sd + 1e-12);
  }
}

TEST_CASE("TabularEnv is reproducible from its seed") {
  auto a = tabular_env(make_two_state(), std::mt19937_64(42));
  auto b = tabular_env(make_two_state(), std::mt19937_64(42));
  a->reset();
  b->reset();
  CHECK(a->state() == b->state());
  for (int t = 0; t < 200; ++t) {
    a->step(t % 2);
    b->step(t % 2);
    CHECK(a->state() == b->state());
  }
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  const double pi = std::numbers::pi;
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(pi) == pi);
  CHECK(wrap_angle(-pi) == pi);
  CHECK(wrap_angle(3.0 * pi) == doctest::Approx(pi));
  CHECK(wrap_angle(2.0 * pi + 0.1) == doctest::Approx(0.1));
  CHECK(wrap_angle(-0.5) == -0.5);
  for (double t = -20.0; t < 20.0; t += 0.37) {
    const double w = wrap_angle(t);
    CHECK(w > -pi);
    CHECK(w <= pi);
    CHECK(std::abs(std::remainder(w - t, 2.0 * pi)) <= 1e-12);
  }
}

TEST_CASE("pendulum reward and dynamics") {
  PendulumEnv env(std::mt19937_64(0));
  env.set_state(0.0, 0.0);
  StepResult res = env.step(0.0);
  CHECK(res.reward == 0.0);
  CHECK(env.theta() == 0.0);
  CHECK(env.theta_dot() == 0.0);

  env.set_state(0.5, 1.0);
  res = env.step(5.0);
  CHECK(res.reward == doctest::Approx(-(0.25 + 0.1 + 0.001 * 4.0)));
  CHECK(res.info.at("torque") == 2.0);
  const double accel = 15.0 * std::sin(0.5) + 3.0 * 2.0;
  CHECK(env.theta_dot() == doctest::Approx(1.0 + accel * 0.05));
  CHECK(env.theta() == doctest::Approx(0.5 + env.theta_dot() * 0.05));

  env.set_state(0.0, 7.99);
  env.step(2.0);
  CHECK(env.theta_dot() == 8.0);
  CHECK(res.observation.size() == 3);
  CHECK_THROWS_AS(env.step(std::nan("")), std::invalid_argument);
}

TEST_CASE("pendulum reset draws within the documented ranges") {
  PendulumEnv env(std::mt19937_64(7));
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd obs = env.reset();
    CHECK(std::abs(env.theta()) <= std::numbers::pi);
    CHECK(std::abs(env.theta_dot()) <= 1.0);
    CHECK(obs(0) * obs(0) + obs(1) * obs(1) == doctest::Approx(1.0));
  }
}

TEST_CASE("an energy-pumping controller swings the pendulum upright") {
  PendulumEnv env(std::mt19937_64(0));
  env.set_state(std::numbers::pi, 0.0);
  bool upright = false;
  for (int t = 0; t < 400 && !upright; ++t) {
    const double th = wrap_angle(env.theta());
    const double thd = env.theta_dot();
    double u = 0.0;
    if (std::abs(th) < 0.6) {
      u = -(12.0 * th + 2.5 * thd);
    } else {
      const double energy = 0.5 * thd * thd + 15.0 * (std::cos(th) - 1.0);
      const double dir = thd >= 0.0 ? 1.0 : -1.0;
      u = energy < 0.0 ? 2.0 * dir : -2.0 * dir;
    }
    env.step(u);
    upright = std::abs(wrap_angle(env.theta())) < 0.2;
  }
  CHECK(upright);
}

TEST_CASE("env_factory resolves names") {
  std::mt19937_64 rng(0);
  CHECK(env_factory("twostate")(rng)->observation_dim() == 2);
  CHECK(env_factory("twoloop")(rng)->observation_dim() == 4);
  auto pend = env_factory("pendulum")(rng);
  CHECK(pend->action_space().kind == ActionKind::Continuous);
  CHECK(pend->action_space().high == 2.0);
  CHECK_THROWS_AS(env_factory("cartpole"), std::invalid_argument);
}
