#include "apo/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace apo {

namespace {

StateDistribution occupancy(const Eigen::MatrixXd& chain, double gamma, const Eigen::VectorXd& d0) {
  if (gamma == 1.0) return stationary_distribution(chain);
  return discounted_state_distribution(chain, gamma, d0);
}

/// Per-state E_{a ~ pi_new} A_{pi_old,gamma}(s, a).
Eigen::VectorXd mean_advantage(const ValueFunctions& vf, const TabularPolicy& pi_new) {
  return (vf.adv.array() * pi_new.probs.array()).rowwise().sum();
}

void require_same_shape(const TabularPolicy& a, const TabularPolicy& b) {
  if (a.probs.rows() != b.probs.rows() || a.probs.cols() != b.probs.cols()) {
    throw DimensionError("policies have different shapes");
  }
}

}  // namespace

double surrogate_objective(const Mdp& mdp, const TabularPolicy& pi_old, const TabularPolicy& pi_new,
                           double gamma) {
  require_same_shape(pi_old, pi_new);
  const Eigen::MatrixXd chain_old = induced_transition(mdp, pi_old);
  const Eigen::MatrixXd chain_new = induced_transition(mdp, pi_new);
  const ValueFunctions vf = value_functions(mdp, pi_old, gamma);
  const Eigen::VectorXd bracket = induced_reward(mdp, pi_new) - induced_reward(mdp, pi_old) +
                                  gamma * (chain_new - chain_old) * vf.v;
  return occupancy(chain_old, gamma, mdp.init_dist).probs().dot(bracket);
}

double expected_advantage(const Mdp& mdp, const TabularPolicy& pi_old, const TabularPolicy& pi_new,
                          double gamma, const StateDistribution& weights) {
  require_same_shape(pi_old, pi_new);
  const ValueFunctions vf = value_functions(mdp, pi_old, gamma);
  return weights.probs().dot(mean_advantage(vf, pi_new));
}

double epsilon_gamma(const Mdp& mdp, const TabularPolicy& pi_old, const TabularPolicy& pi_new,
                     double gamma) {
  require_same_shape(pi_old, pi_new);
  return mean_advantage(value_functions(mdp, pi_old, gamma), pi_new).cwiseAbs().maxCoeff();
}

double xi_gamma(double gamma, double kemeny_new) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw InvalidDiscountError("xi_gamma: gamma must lie in [0, 1]");
  }
  if (!(kemeny_new >= 1.0)) {
    throw std::invalid_argument("xi_gamma: Kemeny's constant is at least 1");
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double discount_branch = gamma < 1.0 ? gamma / (1.0 - gamma) : inf;
  const double denom = 1.0 - (1.0 - gamma) * kemeny_new;
  const double kemeny_branch =
      std::abs(denom) < 1e-12 ? inf : std::abs(gamma * (kemeny_new - 1.0) / denom);
  return std::min(discount_branch, kemeny_branch);
}

double distribution_tv(const StateDistribution& d1, const StateDistribution& d2) {
  if (d1.size() != d2.size()) throw DimensionError("distribution_tv: length mismatch");
  return 0.5 * (d1.probs() - d2.probs()).cwiseAbs().sum();
}

BoundReport check_performance_bound(const Mdp& mdp, const TabularPolicy& pi_old,
                                    const TabularPolicy& pi_new, double gamma) {
  require_same_shape(pi_old, pi_new);
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidDiscountError("check_performance_bound: gamma must lie in (0, 1]");
  }
  const Eigen::MatrixXd chain_old = induced_transition(mdp, pi_old);
  const Eigen::MatrixXd chain_new = induced_transition(mdp, pi_new);
  const StateDistribution d_old = occupancy(chain_old, gamma, mdp.init_dist);
  const StateDistribution d_new = occupancy(chain_new, gamma, mdp.init_dist);
  const ValueFunctions vf = value_functions(mdp, pi_old, gamma);
  const Eigen::VectorXd per_state_adv = mean_advantage(vf, pi_new);

  BoundReport rep;
  rep.gamma = gamma;
  rep.actual_diff = d_new.probs().dot(induced_reward(mdp, pi_new)) -
                    d_old.probs().dot(induced_reward(mdp, pi_old));
  rep.difference_formula_residual = std::abs(rep.actual_diff - d_new.probs().dot(per_state_adv));

  const Eigen::VectorXd bracket = induced_reward(mdp, pi_new) - induced_reward(mdp, pi_old) +
                                  gamma * (chain_new - chain_old) * vf.v;
  rep.surrogate = d_old.probs().dot(bracket);
  rep.surrogate_route_gap = std::abs(rep.surrogate - d_old.probs().dot(per_state_adv));

  rep.eps_gamma = per_state_adv.cwiseAbs().maxCoeff();
  rep.kemeny_new = kemeny_constant(mdp, pi_new);
  rep.xi_gamma = xi_gamma(gamma, rep.kemeny_new);
  rep.exp_policy_tv = policy_distance(pi_new, pi_old, d_old).expected_tv;
  rep.dist_tv = distribution_tv(d_new, d_old);

  const double margin = 2.0 * rep.eps_gamma * rep.xi_gamma * rep.exp_policy_tv;
  rep.lower = rep.surrogate - margin;
  rep.upper = rep.surrogate + margin;

  rep.holds_difference_formula = rep.difference_formula_residual <= kBoundSlack;
  rep.holds_lower = rep.lower <= rep.actual_diff + kBoundSlack;
  rep.holds_upper = rep.actual_diff <= rep.upper + kBoundSlack;
  rep.holds_prop1 =
      std::abs(rep.actual_diff - rep.surrogate) <= 2.0 * rep.eps_gamma * rep.dist_tv + kBoundSlack;
  rep.holds_prop2 = rep.dist_tv <= rep.xi_gamma * rep.exp_policy_tv + kBoundSlack;
  return rep;
}

double check_distribution_identity(const Mdp& mdp, const TabularPolicy& pi_old,
                                   const TabularPolicy& pi_new, double gamma) {
  require_same_shape(pi_old, pi_new);
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidDiscountError("check_distribution_identity: gamma must lie in (0, 1]");
  }
  const Eigen::MatrixXd chain_old = induced_transition(mdp, pi_old);
  const Eigen::MatrixXd chain_new = induced_transition(mdp, pi_new);
  const StateDistribution d_old = occupancy(chain_old, gamma, mdp.init_dist);
  const StateDistribution d_new = occupancy(chain_new, gamma, mdp.init_dist);
  const Eigen::MatrixXd z_new =
      fundamental_matrix(chain_new, stationary_distribution(chain_new), gamma);
  const Eigen::RowVectorXd lhs = (d_new.probs() - d_old.probs()).transpose();
  const Eigen::RowVectorXd rhs = gamma * d_old.probs().transpose() * (chain_new - chain_old) * z_new;
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

MatrixIdentityReport check_matrix_identities(const Mdp& mdp, const TabularPolicy& policy,
                                             double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidDiscountError("check_matrix_identities: gamma must lie in (0, 1]");
  }
  const PolicyAnalysis pa = analyze_policy(mdp, policy, gamma);
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  const auto n = chain.rows();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, n);
  // D^{-1} = diag(d), so M D^{-1} scales column s' by d(s').
  const Eigen::MatrixXd m_dinv = pa.m * pa.d_stat.probs().asDiagonal();

  MatrixIdentityReport rep;
  rep.kemeny = pa.kemeny;
  const Eigen::MatrixXd stochastic = m_dinv / pa.kemeny;
  rep.stochastic_row_sums = (stochastic.rowwise().sum() - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff();
  rep.stochastic_negativity = std::max(0.0, -stochastic.minCoeff());

  rep.passage_identity_skipped = (1.0 - gamma) * pa.kemeny >= 1.0;
  if (!rep.passage_identity_skipped) {
    const Eigen::MatrixXd& z = pa.z;
    const Eigen::MatrixXd z_dg = z.diagonal().asDiagonal();
    const Eigen::MatrixXd zm_dg = (z * pa.m).diagonal().asDiagonal();
    const Eigen::MatrixXd lhs = z * (id - (1.0 - gamma) * m_dinv);
    const Eigen::MatrixXd rhs = id - m_dinv + ones * z_dg -
                                (1.0 - gamma) * ones * zm_dg * pa.d_stat.probs().asDiagonal();
    rep.passage_identity = (lhs - rhs).cwiseAbs().maxCoeff();
  }
  rep.z_row_sums = pa.residuals.z_row_sums;
  rep.z_left_fixed = pa.residuals.z_left_fixed;
  rep.z_poisson = pa.residuals.z_poisson;
  rep.m_bellman = pa.residuals.m_bellman;
  return rep;
}

std::vector<XiPoint> xi_profile(double kemeny, const std::vector<double>& gamma_grid) {
  std::vector<XiPoint> out;
  out.reserve(gamma_grid.size());
  for (double g : gamma_grid) out.push_back({g, xi_gamma(g, kemeny)});
  return out;
}

std::vector<double> unit_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("unit_grid: step must be in (0, 1]");
  const auto n = static_cast<int>(std::llround(1.0 / step));
  std::vector<double> grid(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) / n;
  return grid;
}

}  // namespace apo
