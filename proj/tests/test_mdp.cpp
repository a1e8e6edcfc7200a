#include "support.hpp"

#include <cmath>
#include <limits>

using namespace apo;
using apo::testing::max_abs;

TEST_CASE("validate_mdp accepts the two-state MDP") {
  CHECK(validate_mdp(make_two_state()).ok());
}

TEST_CASE("validate_mdp reports a short transition row with its magnitude") {
  Mdp mdp = make_two_state();
  mdp.p(1, 0, 1) = 0.9;
  const ValidationResult res = validate_mdp(mdp);
  REQUIRE_FALSE(res.ok());
  REQUIRE(res.violations.size() == 1);
  CHECK(res.violations[0].kind == "row-sum");
  CHECK(res.violations[0].state == 1);
  CHECK(res.violations[0].action == 0);
  CHECK(res.violations[0].magnitude == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("validate_mdp flags non-finite rewards, negative entries and a bad initial distribution") {
  Mdp mdp = make_two_state();
  mdp.reward(0, 1) = std::numeric_limits<double>::quiet_NaN();
  mdp.p(0, 1, 0) = -0.5;
  mdp.p(0, 1, 1) = 1.5;
  mdp.init_dist << 0.7, 0.7;
  const ValidationResult res = validate_mdp(mdp);
  bool reward = false, range = false, init = false;
  for (const auto& v : res.violations) {
    reward |= v.kind == "reward-finite";
    range |= v.kind == "probability-range";
    init |= v.kind == "init-sum";
  }
  CHECK(reward);
  CHECK(range);
  CHECK(init);
}

TEST_CASE("validate_policy checks rows") {
  CHECK(validate_policy(TabularPolicy::uniform(3, 2)).ok());
  TabularPolicy bad = TabularPolicy::uniform(3, 2);
  bad.probs(2, 0) = 0.2;
  CHECK_FALSE(validate_policy(bad).ok());
}

TEST_CASE("StateDistribution clamps tiny negatives and rejects bad sums") {
  Eigen::VectorXd v(3);
  v << -5e-13, 0.5, 0.5 + 5e-13;
  const StateDistribution d(v);
  CHECK(d[0] == 0.0);
  Eigen::VectorXd bad(2);
  bad << 0.5, 0.6;
  CHECK_THROWS_AS(StateDistribution{bad}, std::domain_error);
  Eigen::VectorXd neg(2);
  neg << -0.1, 1.1;
  CHECK_THROWS_AS(StateDistribution{neg}, std::domain_error);
}

TEST_CASE("induced transition on the two-state MDP") {
  const Mdp mdp = make_two_state();
  Eigen::Matrix2d swap, half, skew;
  swap << 0, 1, 1, 0;
  half << 0.5, 0.5, 0.5, 0.5;
  skew << 0.2, 0.8, 0.2, 0.8;
  CHECK(max_abs(induced_transition(mdp, two_state_policy(1.0, 1.0)) - swap) == 0.0);
  CHECK(max_abs(induced_transition(mdp, TabularPolicy::uniform(2, 2)) - half) == 0.0);
  CHECK(max_abs(induced_transition(mdp, two_state_policy(0.8, 0.2)) - skew) < 1e-15);
}

TEST_CASE("induced transition rejects mismatched shapes") {
  CHECK_THROWS_AS(induced_transition(make_two_state(), TabularPolicy::uniform(3, 2)), DimensionError);
  CHECK_THROWS_AS(induced_reward(make_two_state(), TabularPolicy::uniform(2, 3)), DimensionError);
}

TEST_CASE("induced reward") {
  const Mdp mdp = make_two_state();
  for (double p : {0.0, 0.3, 1.0}) {
    const Eigen::VectorXd r = induced_reward(mdp, two_state_policy(p, 1.0 - p));
    CHECK(r(0) == 0.0);
    CHECK(r(1) == 1.0);
  }
  Mdp zero = mdp;
  zero.reward.setZero();
  CHECK(induced_reward(zero, TabularPolicy::uniform(2, 2)).isZero(0.0));
  Mdp by_action = mdp;
  by_action.reward << 0, 1, 0, 1;
  CHECK(induced_reward(by_action, TabularPolicy::uniform(2, 2)).isApprox(Eigen::Vector2d(0.5, 0.5)));
}

TEST_CASE("ergodicity by reachability") {
  const Mdp mdp = make_two_state();
  CHECK(is_ergodic(mdp, two_state_policy(1.0, 1.0)).ergodic);
  const ErgodicityReport stay = is_ergodic(mdp, two_state_policy(0.0, 0.0));
  CHECK_FALSE(stay.ergodic);
  REQUIRE(stay.unreachable.has_value());
  CHECK(stay.unreachable->first == 0);
  CHECK(stay.unreachable->second == 1);
  std::mt19937_64 rng(3);
  CHECK(is_ergodic(random_ergodic_mdp(rng, 5, 3), TabularPolicy::uniform(5, 3)).ergodic);
}

TEST_CASE("random_ergodic_mdp honours the floor and validates") {
  std::mt19937_64 rng(0);
  const Mdp mdp = random_ergodic_mdp(rng, 4, 2);
  CHECK(mdp.transition.minCoeff() >= 1e-3 / (1.0 + 4 * 1e-3) - 1e-15);
  CHECK(validate_mdp(mdp).ok());
  CHECK(mdp.reward.minCoeff() >= 0.0);
  CHECK(mdp.reward.maxCoeff() <= 1.0);
  CHECK_THROWS_AS(random_ergodic_mdp(rng, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(random_ergodic_mdp(rng, 3, 0), std::invalid_argument);
}

TEST_CASE("random MDPs are ergodic under random policies") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int n = 2 + static_cast<int>(seed % 7);
    const int a = 1 + static_cast<int>(seed % 4);
    const Mdp mdp = random_ergodic_mdp(rng, n, a);
    REQUIRE(validate_mdp(mdp).ok());
    const TabularPolicy pi = random_policy(rng, n, a);
    CHECK(validate_policy(pi).ok());
    CHECK(is_ergodic(mdp, pi).ergodic);
    const Eigen::MatrixXd chain = induced_transition(mdp, pi);
    CHECK((chain.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("random_ergodic_mdp is ergodic under 100 random policies per instance") {
  std::mt19937_64 rng(11);
  for (int inst = 0; inst < 5; ++inst) {
    const Mdp mdp = random_ergodic_mdp(rng, 6, 3);
    for (int k = 0; k < 100; ++k) CHECK(is_ergodic(mdp, random_policy(rng, 6, 3)).ergodic);
  }
}

TEST_CASE("random_policy rows are distributions and the generator is deterministic") {
  std::mt19937_64 a(9), b(9);
  const TabularPolicy p = random_policy(a, 5, 4);
  const TabularPolicy q = random_policy(b, 5, 4);
  CHECK(p.probs == q.probs);
  CHECK((p.probs.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(p.probs.minCoeff() >= 0.0);
}

TEST_CASE("policy distance on the two-state pair") {
  const StateDistribution uniform_w(Eigen::Vector2d(0.5, 0.5));
  const PolicyDistance same = policy_distance(two_state_policy(0.5, 0.5), two_state_policy(0.5, 0.5), uniform_w);
  CHECK(same.tv.isZero(0.0));
  CHECK(same.expected_tv == 0.0);
  CHECK(same.expected_kl == 0.0);

  const PolicyDistance d = policy_distance(two_state_policy(0.5, 0.5), two_state_policy(0.8, 0.2), uniform_w);
  CHECK(d.tv(0) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(d.tv(1) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(d.expected_tv == doctest::Approx(0.3).epsilon(1e-14));

  const PolicyDistance opp = policy_distance(two_state_policy(0.0, 0.0), two_state_policy(1.0, 1.0), uniform_w);
  CHECK(opp.tv.isApprox(Eigen::Vector2d(1.0, 1.0)));
  CHECK(std::isinf(opp.expected_kl));
}

TEST_CASE("TV is symmetric and bounded by sqrt(KL / 2)") {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 50; ++k) {
    const TabularPolicy p = random_policy(rng, 4, 3);
    const TabularPolicy q = random_policy(rng, 4, 3);
    for (int s = 0; s < 4; ++s) {
      const StateDistribution at_s(Eigen::VectorXd::Unit(4, s));
      const PolicyDistance pq = policy_distance(p, q, at_s);
      const PolicyDistance qp = policy_distance(q, p, at_s);
      CHECK(pq.expected_tv == doctest::Approx(qp.expected_tv).epsilon(1e-14));
      CHECK(pq.expected_tv <= std::sqrt(pq.expected_kl / 2.0) + 1e-12);
    }
  }
}

TEST_CASE("policy distance rejects mismatched shapes") {
  const StateDistribution w(Eigen::Vector2d(0.5, 0.5));
  CHECK_THROWS_AS(policy_distance(TabularPolicy::uniform(2, 2), TabularPolicy::uniform(2, 3), w), DimensionError);
}
