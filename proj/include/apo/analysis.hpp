#pragma once

#include "apo/mdp.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace apo {

/// A linear system was too ill-conditioned to trust (reciprocal condition
/// estimate below 1e-13) or a solver residual exceeded its tolerance.
class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& what, double rcond)
      : std::runtime_error(what + " (rcond estimate " + std::to_string(rcond) + ")"),
        rcond_(rcond) {}
  [[nodiscard]] double rcond() const { return rcond_; }

 private:
  double rcond_;
};

/// Rejects gamma outside the range an operation accepts.
class InvalidDiscountError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tolerance ladder: construction 1e-12, solver residuals 1e-10, derived identities 1e-9.
inline constexpr double kSolverTolerance = 1e-10;
inline constexpr double kIdentityTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Chain-level routines. These take an induced transition matrix directly so
// that callers who already hold P_pi do not rebuild it.
// ---------------------------------------------------------------------------

/// Unique d with d P = d, d e = 1. One balance equation is replaced by the
/// normalization row. Works for any chain with a single recurrent class
/// (transient states get zero mass); throws NotErgodicError otherwise.
StateDistribution stationary_distribution(const Eigen::MatrixXd& chain);

/// (1 - gamma) d0 (I - gamma P)^{-1} for gamma in [0, 1).
StateDistribution discounted_state_distribution(const Eigen::MatrixXd& chain, double gamma,
                                                const Eigen::VectorXd& init_dist);

/// Z = (I - gamma P + gamma e d)^{-1} for gamma in (0, 1].
Eigen::MatrixXd fundamental_matrix(const Eigen::MatrixXd& chain, const StateDistribution& stationary,
                                   double gamma);

/// M = (I - Z + E Z_dg) D with Z the gamma = 1 fundamental matrix and
/// D = diag(1 / d). Requires every state to be recurrent.
Eigen::MatrixXd mean_first_passage(const Eigen::MatrixXd& chain, const StateDistribution& stationary);

// ---------------------------------------------------------------------------
// MDP + policy entry points.
// ---------------------------------------------------------------------------

StateDistribution stationary_distribution(const Mdp& mdp, const TabularPolicy& policy);

struct DiscountedOccupancy {
  StateDistribution dist;
  /// True when gamma == 1 and the stationary distribution was returned as the limit.
  bool stationary_limit = false;
};

/// d_{pi,gamma}; gamma == 1 returns the stationary distribution.
DiscountedOccupancy discounted_state_distribution(const Mdp& mdp, const TabularPolicy& policy,
                                                  double gamma, const Eigen::VectorXd& init_dist);

/// eta_pi = d_pi . r_pi
double average_reward(const Mdp& mdp, const TabularPolicy& policy);

/// eta_{pi,gamma} = d_{pi,gamma} . r_pi; gamma == 1 returns the average reward.
double discounted_return(const Mdp& mdp, const TabularPolicy& policy, double gamma,
                         const Eigen::VectorXd& init_dist);

Eigen::MatrixXd fundamental_matrix(const Mdp& mdp, const TabularPolicy& policy, double gamma);

/**
 * Zero-mean value functions
 *   v   = (Z_gamma - e d) r_pi
 *   q   = r(s,a) - eta + gamma sum_s' P(s'|s,a) v(s')
 *   adv = q - v
 * gamma == 1 gives the average-reward (bias) values.
 */
struct ValueFunctions {
  double gamma = 1.0;
  double eta = 0.0;  // average reward of the evaluated policy
  Eigen::VectorXd v;
  Eigen::MatrixXd q;
  Eigen::MatrixXd adv;
};

ValueFunctions value_functions(const Mdp& mdp, const TabularPolicy& policy, double gamma);

Eigen::MatrixXd mean_first_passage(const Mdp& mdp, const TabularPolicy& policy);

/// kappa = sum_s' d(s') M(s, s'), checked constant over s and equal to trace(Z_1).
double kemeny_constant(const Mdp& mdp, const TabularPolicy& policy);

struct AnalysisResiduals {
  double stationary = 0.0;        // ||d P - d||_inf
  double zero_mean = 0.0;         // |d . v|
  double z_row_sums = 0.0;        // ||Z e - e||_inf
  double z_left_fixed = 0.0;      // ||d Z - d||_inf
  double z_poisson = 0.0;         // ||Z (I - gamma P) - (I - gamma e d)||_max
  double m_bellman = 0.0;         // ||M - P (M - D) - E||_max
  double m_diagonal = 0.0;        // max |M(s,s) - 1/d(s)|
  double kemeny_row_spread = 0.0; // max - min of the per-row Kemeny sums
  double kemeny_trace_gap = 0.0;  // |kappa - trace(Z_1)|
};

/// Every exact quantity for one (policy, gamma) pair.
struct PolicyAnalysis {
  double gamma = 1.0;
  double eta_avg = 0.0;
  double eta_disc = 0.0;
  StateDistribution d_stat;
  StateDistribution d_disc;
  Eigen::VectorXd v;
  Eigen::MatrixXd q;
  Eigen::MatrixXd adv;
  Eigen::MatrixXd z;  // Z_{pi,gamma}
  Eigen::MatrixXd m;
  double kemeny = 0.0;
  /// The raw discounted Poisson solution (I - gamma P + gamma e d)^{-1} r differs
  /// from v by this constant times e.
  double poisson_shift = 0.0;
  AnalysisResiduals residuals;
};

/// Requires an irreducible induced chain (throws NotErgodicError naming an
/// unreachable pair otherwise).
PolicyAnalysis analyze_policy(const Mdp& mdp, const TabularPolicy& policy, double gamma);

struct OptimalPolicy {
  TabularPolicy policy;
  std::vector<int> actions;
  double value = 0.0;  // eta* for the average criterion
  int iterations = 0;
};

/**
 * Average-reward policy iteration. The first evaluation uses the uniform
 * policy; each improvement is greedy on q with ties broken by the lowest
 * action index, except that the incumbent action is kept when it is within
 * 1e-12 of the best. Every evaluated policy must induce a chain with a single
 * recurrent class. Caps at 10 |S| |A| iterations.
 */
OptimalPolicy average_policy_iteration(const Mdp& mdp);

/// Classical discounted policy iteration on the unnormalized values
/// (I - gamma P)^{-1} r. `value` is the normalized return (1 - gamma) d0 . v.
OptimalPolicy discounted_policy_iteration(const Mdp& mdp, double gamma);

/// Unnormalized discounted values (I - gamma P_pi)^{-1} r_pi, gamma in [0, 1).
Eigen::VectorXd discounted_values(const Mdp& mdp, const TabularPolicy& policy, double gamma);

}  // namespace apo
