#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace apo {

/// Raised when two objects that must agree on |S| or |A| do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a chain has no unique stationary distribution, or when an
/// operation that needs every state recurrent is given a reducible chain.
class NotErgodicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Absolute tolerance for probability rows at construction time.
inline constexpr double kProbabilityTolerance = 1e-12;

/**
 * Finite MDP with rewards r(s, a).
 *
 * The transition tensor P(s' | s, a) is stored as an (|S|·|A|) × |S| matrix
 * whose row s·|A| + a is the next-state distribution of the pair (s, a).
 */
struct Mdp {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd transition;  // (n_states * n_actions) x n_states
  Eigen::MatrixXd reward;      // n_states x n_actions
  Eigen::VectorXd init_dist;   // n_states

  Mdp() = default;
  Mdp(int states, int actions);

  [[nodiscard]] double p(int s, int a, int next) const {
    return transition(static_cast<Eigen::Index>(s) * n_actions + a, next);
  }
  double& p(int s, int a, int next) {
    return transition(static_cast<Eigen::Index>(s) * n_actions + a, next);
  }
  [[nodiscard]] auto row(int s, int a) const {
    return transition.row(static_cast<Eigen::Index>(s) * n_actions + a);
  }
};

/// Per-state action distribution pi(a | s), stored as an |S| x |A| matrix.
struct TabularPolicy {
  Eigen::MatrixXd probs;

  TabularPolicy() = default;
  explicit TabularPolicy(Eigen::MatrixXd p) : probs(std::move(p)) {}

  [[nodiscard]] int n_states() const { return static_cast<int>(probs.rows()); }
  [[nodiscard]] int n_actions() const { return static_cast<int>(probs.cols()); }

  static TabularPolicy uniform(int n_states, int n_actions);
  /// Puts all mass on actions[s] in state s.
  static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);
};

/**
 * A probability vector over states.
 *
 * Built from solver output: entries in [-1e-12, 0) are clamped to zero and
 * the sum must be within 1e-10 of one, otherwise construction throws.
 */
class StateDistribution {
 public:
  static constexpr double kSumTolerance = 1e-10;
  static constexpr double kNegativeClamp = 1e-12;

  StateDistribution() = default;
  explicit StateDistribution(Eigen::VectorXd probs);

  [[nodiscard]] const Eigen::VectorXd& probs() const { return probs_; }
  [[nodiscard]] double operator[](Eigen::Index s) const { return probs_(s); }
  [[nodiscard]] Eigen::Index size() const { return probs_.size(); }

 private:
  Eigen::VectorXd probs_;
};

struct Violation {
  std::string kind;  // "row-sum", "probability-range", "reward-finite", "init-sum", "shape"
  int state = -1;
  int action = -1;
  double magnitude = 0.0;
};

struct ValidationResult {
  std::vector<Violation> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
};

ValidationResult validate_mdp(const Mdp& mdp);
ValidationResult validate_policy(const TabularPolicy& policy);

/// P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
Eigen::MatrixXd induced_transition(const Mdp& mdp, const TabularPolicy& policy);
/// r_pi(s) = sum_a pi(a|s) r(s,a).
Eigen::VectorXd induced_reward(const Mdp& mdp, const TabularPolicy& policy);

struct ErgodicityReport {
  bool ergodic = false;
  /// A (source, target) pair with no positive-probability path, when not ergodic.
  std::optional<std::pair<int, int>> unreachable;
};

/// Irreducibility of a stochastic matrix by reachability closure over
/// entries > 1e-12. Periodic chains count as ergodic.
ErgodicityReport is_irreducible(const Eigen::MatrixXd& chain);
ErgodicityReport is_ergodic(const Mdp& mdp, const TabularPolicy& policy);

/// Transition rows ~ Dirichlet(1,...,1), floored at 1e-3 and renormalized;
/// rewards ~ U(reward_low, reward_high); uniform initial distribution.
Mdp random_ergodic_mdp(std::mt19937_64& rng, int n_states, int n_actions,
                       double reward_low = 0.0, double reward_high = 1.0);

/// Rows ~ Dirichlet(1,...,1).
TabularPolicy random_policy(std::mt19937_64& rng, int n_states, int n_actions);

struct PolicyDistance {
  Eigen::VectorXd tv;     // per state
  double expected_tv = 0.0;
  double expected_kl = 0.0;  // +inf when KL(p1 || p2) is unbounded somewhere it is weighted
};

/// TV[s] = 1/2 sum_a |p1 - p2|, KL(p1 || p2); expectations under `weights`.
PolicyDistance policy_distance(const TabularPolicy& p1, const TabularPolicy& p2,
                               const StateDistribution& weights);

/// Two states; action 0 stays, action 1 swaps; r(s, a) = 1{s = 1}; d0 uniform.
Mdp make_two_state();

/// Two-state policy that switches with probability p0 in state 0 and p1 in state 1.
TabularPolicy two_state_policy(double switch0, double switch1);

}  // namespace apo
