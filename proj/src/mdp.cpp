#include "apo/mdp.hpp"

#include <cmath>
#include <limits>

namespace apo {

Mdp::Mdp(int states, int actions)
    : n_states(states),
      n_actions(actions),
      transition(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states) * actions, states)),
      reward(Eigen::MatrixXd::Zero(states, actions)),
      init_dist(Eigen::VectorXd::Constant(states, states > 0 ? 1.0 / states : 0.0)) {
  if (states <= 0 || actions <= 0) {
    throw std::invalid_argument("Mdp: n_states and n_actions must be positive");
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  if (n_states <= 0 || n_actions <= 0) {
    throw std::invalid_argument("TabularPolicy::uniform: sizes must be positive");
  }
  return TabularPolicy(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) {
      throw std::out_of_range("TabularPolicy::deterministic: action index out of range");
    }
    probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return TabularPolicy(std::move(probs));
}

StateDistribution::StateDistribution(Eigen::VectorXd probs) : probs_(std::move(probs)) {
  for (Eigen::Index s = 0; s < probs_.size(); ++s) {
    if (!std::isfinite(probs_(s)) || probs_(s) < -kNegativeClamp) {
      throw std::domain_error("StateDistribution: entry " + std::to_string(s) +
                              " is negative or non-finite (" + std::to_string(probs_(s)) + ")");
    }
    if (probs_(s) < 0.0) probs_(s) = 0.0;
  }
  const double total = probs_.sum();
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw std::domain_error("StateDistribution: entries sum to " + std::to_string(total));
  }
}

namespace {

void check_rows(const Eigen::MatrixXd& rows, int n_actions, std::vector<Violation>& out) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const int s = n_actions > 0 ? static_cast<int>(i / n_actions) : static_cast<int>(i);
    const int a = n_actions > 0 ? static_cast<int>(i % n_actions) : -1;
    double worst_range = 0.0;
    bool finite = true;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double x = rows(i, j);
      if (!std::isfinite(x)) {
        finite = false;
        continue;
      }
      if (x < 0.0) worst_range = std::max(worst_range, -x);
      if (x > 1.0) worst_range = std::max(worst_range, x - 1.0);
    }
    if (!finite) {
      out.push_back({"probability-range", s, a, std::numeric_limits<double>::infinity()});
      continue;
    }
    if (worst_range > kProbabilityTolerance) out.push_back({"probability-range", s, a, worst_range});
    const double gap = std::abs(rows.row(i).sum() - 1.0);
    if (gap > kProbabilityTolerance) out.push_back({"row-sum", s, a, gap});
  }
}

}  // namespace

ValidationResult validate_mdp(const Mdp& mdp) {
  ValidationResult result;
  auto& v = result.violations;
  if (mdp.n_states <= 0 || mdp.n_actions <= 0 ||
      mdp.transition.rows() != static_cast<Eigen::Index>(mdp.n_states) * mdp.n_actions ||
      mdp.transition.cols() != mdp.n_states || mdp.reward.rows() != mdp.n_states ||
      mdp.reward.cols() != mdp.n_actions || mdp.init_dist.size() != mdp.n_states) {
    v.push_back({"shape", -1, -1, 0.0});
    return result;
  }
  check_rows(mdp.transition, mdp.n_actions, v);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (!std::isfinite(mdp.reward(s, a))) {
        v.push_back({"reward-finite", s, a, std::abs(mdp.reward(s, a))});
      }
    }
  }
  double worst = 0.0;
  bool finite = true;
  for (int s = 0; s < mdp.n_states; ++s) {
    const double x = mdp.init_dist(s);
    if (!std::isfinite(x)) finite = false;
    else worst = std::max({worst, -x, x - 1.0});
  }
  if (!finite) {
    v.push_back({"probability-range", -1, -1, std::numeric_limits<double>::infinity()});
  } else {
    if (worst > kProbabilityTolerance) v.push_back({"probability-range", -1, -1, worst});
    const double gap = std::abs(mdp.init_dist.sum() - 1.0);
    if (gap > kProbabilityTolerance) v.push_back({"init-sum", -1, -1, gap});
  }
  return result;
}

ValidationResult validate_policy(const TabularPolicy& policy) {
  ValidationResult result;
  if (policy.probs.rows() == 0 || policy.probs.cols() == 0) {
    result.violations.push_back({"shape", -1, -1, 0.0});
    return result;
  }
  // One row per state: report the state index, not an (s, a) pair.
  check_rows(policy.probs, 0, result.violations);
  return result;
}

namespace {

void require_matching(const Mdp& mdp, const TabularPolicy& policy) {
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions) {
    throw DimensionError("policy is " + std::to_string(policy.n_states()) + "x" +
                         std::to_string(policy.n_actions()) + " but MDP has " +
                         std::to_string(mdp.n_states) + " states and " +
                         std::to_string(mdp.n_actions) + " actions");
  }
}

}  // namespace

Eigen::MatrixXd induced_transition(const Mdp& mdp, const TabularPolicy& policy) {
  require_matching(mdp, policy);
  Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double w = policy.probs(s, a);
      if (w != 0.0) chain.row(s).noalias() += w * mdp.row(s, a);
    }
  }
  return chain;
}

Eigen::VectorXd induced_reward(const Mdp& mdp, const TabularPolicy& policy) {
  require_matching(mdp, policy);
  return (mdp.reward.array() * policy.probs.array()).rowwise().sum();
}

ErgodicityReport is_irreducible(const Eigen::MatrixXd& chain) {
  const auto n = static_cast<int>(chain.rows());
  // Boolean transitive closure (Warshall); n <= 64 at the scales we handle.
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int i = 0; i < n; ++i) {
    reach[i][i] = 1;
    for (int j = 0; j < n; ++j) {
      if (chain(i, j) > 1e-12) reach[i][j] = 1;
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (int j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = 1;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!reach[i][j]) return {false, std::make_pair(i, j)};
    }
  }
  return {true, std::nullopt};
}

ErgodicityReport is_ergodic(const Mdp& mdp, const TabularPolicy& policy) {
  return is_irreducible(induced_transition(mdp, policy));
}

namespace {

Eigen::VectorXd dirichlet_ones(std::mt19937_64& rng, int k) {
  std::gamma_distribution<double> unit_gamma(1.0, 1.0);
  Eigen::VectorXd x(k);
  for (int i = 0; i < k; ++i) x(i) = unit_gamma(rng);
  const double total = x.sum();
  if (!(total > 0.0)) {
    x.setConstant(1.0 / k);
    return x;
  }
  return x / total;
}

}  // namespace

Mdp random_ergodic_mdp(std::mt19937_64& rng, int n_states, int n_actions, double reward_low,
                       double reward_high) {
  if (n_states < 2 || n_actions < 1) {
    throw std::invalid_argument("random_ergodic_mdp: need n_states >= 2 and n_actions >= 1");
  }
  if (!(reward_low <= reward_high)) {
    throw std::invalid_argument("random_ergodic_mdp: empty reward range");
  }
  constexpr double kFloor = 1e-3;
  Mdp mdp(n_states, n_actions);
  for (Eigen::Index i = 0; i < mdp.transition.rows(); ++i) {
    Eigen::VectorXd row = dirichlet_ones(rng, n_states).cwiseMax(kFloor);
    mdp.transition.row(i) = (row / row.sum()).transpose();
  }
  std::uniform_real_distribution<double> reward(reward_low, reward_high);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = reward(rng);
  }
  return mdp;
}

TabularPolicy random_policy(std::mt19937_64& rng, int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 1) {
    throw std::invalid_argument("random_policy: sizes must be positive");
  }
  Eigen::MatrixXd probs(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) probs.row(s) = dirichlet_ones(rng, n_actions).transpose();
  return TabularPolicy(std::move(probs));
}

PolicyDistance policy_distance(const TabularPolicy& p1, const TabularPolicy& p2,
                               const StateDistribution& weights) {
  if (p1.probs.rows() != p2.probs.rows() || p1.probs.cols() != p2.probs.cols() ||
      weights.size() != p1.probs.rows()) {
    throw DimensionError("policy_distance: shape mismatch");
  }
  const auto n = p1.probs.rows();
  PolicyDistance out;
  out.tv = 0.5 * (p1.probs - p2.probs).cwiseAbs().rowwise().sum();
  out.expected_tv = weights.probs().dot(out.tv);
  double kl_total = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    double kl = 0.0;
    for (Eigen::Index a = 0; a < p1.probs.cols(); ++a) {
      const double p = p1.probs(s, a);
      const double q = p2.probs(s, a);
      if (p <= 0.0) continue;
      if (q <= 0.0) {
        kl = std::numeric_limits<double>::infinity();
        break;
      }
      kl += p * std::log(p / q);
    }
    if (weights[s] > 0.0) kl_total += weights[s] * kl;
  }
  out.expected_kl = kl_total;
  return out;
}

Mdp make_two_state() {
  Mdp mdp(2, 2);
  for (int s = 0; s < 2; ++s) {
    mdp.p(s, 0, s) = 1.0;
    mdp.p(s, 1, 1 - s) = 1.0;
    mdp.reward(s, 0) = mdp.reward(s, 1) = (s == 1) ? 1.0 : 0.0;
  }
  return mdp;
}

TabularPolicy two_state_policy(double switch0, double switch1) {
  Eigen::MatrixXd probs(2, 2);
  probs << 1.0 - switch0, switch0, 1.0 - switch1, switch1;
  return TabularPolicy(std::move(probs));
}

}  // namespace apo
