#pragma once

#include "apo/analysis.hpp"
#include "apo/mdp.hpp"

#include <vector>

namespace apo {

/// Additive slack for every inequality check below.
inline constexpr double kBoundSlack = 1e-9;

/// L_{pi,gamma}(pi') = d_{pi,gamma} [r_{pi'} - r_pi + gamma (P_{pi'} - P_pi) V_{pi,gamma}].
/// The discounted occupancy uses the MDP's init_dist; gamma == 1 uses d_pi.
double surrogate_objective(const Mdp& mdp, const TabularPolicy& pi_old, const TabularPolicy& pi_new,
                           double gamma);

/// E_{s ~ weights, a ~ pi_new}[A_{pi_old,gamma}(s, a)], evaluated from the
/// advantage table rather than the matrix form.
double expected_advantage(const Mdp& mdp, const TabularPolicy& pi_old, const TabularPolicy& pi_new,
                          double gamma, const StateDistribution& weights);

/// max_s |E_{a ~ pi_new} A_{pi_old,gamma}(s, a)|
double epsilon_gamma(const Mdp& mdp, const TabularPolicy& pi_old, const TabularPolicy& pi_new,
                     double gamma);

/**
 * xi_gamma = min{ gamma / (1 - gamma), |gamma (kappa - 1) / (1 - (1 - gamma) kappa)| }.
 *
 * Total over gamma in [0, 1]: the first branch is +inf at gamma = 1 and the
 * second branch is +inf when |1 - (1 - gamma) kappa| < 1e-12.
 */
double xi_gamma(double gamma, double kemeny_new);

/// 1/2 ||d1 - d2||_1
double distribution_tv(const StateDistribution& d1, const StateDistribution& d2);

struct BoundReport {
  double gamma = 1.0;
  double actual_diff = 0.0;     // eta_{pi',gamma} - eta_{pi,gamma}
  double surrogate = 0.0;       // L_{pi,gamma}(pi')
  double eps_gamma = 0.0;
  double xi_gamma = 0.0;
  double kemeny_new = 0.0;
  double exp_policy_tv = 0.0;   // E_{s ~ d_{pi,gamma}} TV(pi' || pi)[s]
  double dist_tv = 0.0;         // TV(d_{pi',gamma} || d_{pi,gamma})
  double lower = 0.0;
  double upper = 0.0;
  /// |actual_diff - E_{s ~ d_{pi',gamma}, a ~ pi'} A_{pi,gamma}|
  double difference_formula_residual = 0.0;
  /// |surrogate - E_{s ~ d_{pi,gamma}, a ~ pi'} A_{pi,gamma}|
  double surrogate_route_gap = 0.0;
  bool holds_difference_formula = false;
  bool holds_lower = false;
  bool holds_upper = false;
  bool holds_prop1 = false;
  bool holds_prop2 = false;

  [[nodiscard]] bool all_hold() const {
    return holds_difference_formula && holds_lower && holds_upper && holds_prop1 && holds_prop2;
  }
};

/// Evaluates every term of the two-sided improvement bound from exact
/// quantities. Failed checks are reported through the holds_* flags.
BoundReport check_performance_bound(const Mdp& mdp, const TabularPolicy& pi_old,
                                    const TabularPolicy& pi_new, double gamma);

/// ||(d' - d) - gamma d (P' - P) Z'||_inf with discounted occupancies and the
/// new policy's Z_gamma (stationary distributions and Z_1 at gamma == 1).
double check_distribution_identity(const Mdp& mdp, const TabularPolicy& pi_old,
                                   const TabularPolicy& pi_new, double gamma);

struct MatrixIdentityReport {
  double kemeny = 0.0;
  /// ||A e - e||_inf for A = M D^{-1} / kappa.
  double stochastic_row_sums = 0.0;
  /// max(0, -min A).
  double stochastic_negativity = 0.0;
  /// Residual of Z (I - (1-gamma) M D^{-1}) = I - M D^{-1} + E Z_dg - (1-gamma) E (Z M)_dg D^{-1}.
  double passage_identity = 0.0;
  /// True when (1 - gamma) kappa >= 1; passage_identity is then not evaluated.
  bool passage_identity_skipped = false;
  double z_row_sums = 0.0;
  double z_left_fixed = 0.0;
  double z_poisson = 0.0;
  double m_bellman = 0.0;
};

MatrixIdentityReport check_matrix_identities(const Mdp& mdp, const TabularPolicy& policy, double gamma);

struct XiPoint {
  double gamma = 0.0;
  double xi = 0.0;
};

std::vector<XiPoint> xi_profile(double kemeny, const std::vector<double>& gamma_grid);

/// Evenly spaced grid 0, step, 2 step, ..., 1 (1 included).
std::vector<double> unit_grid(double step);

/// 1 - 1 / (2 kappa - 1), where xi_gamma peaks at 2 (kappa - 1).
inline double xi_argmax(double kemeny) { return 1.0 - 1.0 / (2.0 * kemeny - 1.0); }

}  // namespace apo
