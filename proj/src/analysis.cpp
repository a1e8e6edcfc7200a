#include "apo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace apo {

namespace {

constexpr double kMinRcond = 1e-13;

void check_gamma(double gamma, bool allow_zero, bool allow_one, const char* where) {
  const bool low_ok = allow_zero ? gamma >= 0.0 : gamma > 0.0;
  const bool high_ok = allow_one ? gamma <= 1.0 : gamma < 1.0;
  if (!std::isfinite(gamma) || !low_ok || !high_ok) {
    throw InvalidDiscountError(std::string(where) + ": gamma " + std::to_string(gamma) +
                               " is outside the accepted range");
  }
}

void require_square(const Eigen::MatrixXd& chain, const char* where) {
  if (chain.rows() != chain.cols() || chain.rows() == 0) {
    throw DimensionError(std::string(where) + ": transition matrix must be square and non-empty");
  }
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

StateDistribution stationary_distribution(const Eigen::MatrixXd& chain) {
  require_square(chain, "stationary_distribution");
  const auto n = chain.rows();
  Eigen::MatrixXd system = (Eigen::MatrixXd::Identity(n, n) - chain).transpose();
  system.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const double rcond = lu.rcond();
  if (!(rcond > kMinRcond)) {
    throw NotErgodicError("stationary_distribution: balance equations are singular (rcond " +
                          std::to_string(rcond) + "); the chain has more than one recurrent class");
  }
  Eigen::VectorXd d = lu.solve(rhs);
  const double residual = (d.transpose() * chain - d.transpose()).cwiseAbs().maxCoeff();
  if (residual > kSolverTolerance) {
    throw ConditioningError("stationary_distribution: residual " + std::to_string(residual), rcond);
  }
  return StateDistribution(std::move(d));
}

StateDistribution discounted_state_distribution(const Eigen::MatrixXd& chain, double gamma,
                                                const Eigen::VectorXd& init_dist) {
  require_square(chain, "discounted_state_distribution");
  check_gamma(gamma, true, false, "discounted_state_distribution");
  if (init_dist.size() != chain.rows()) {
    throw DimensionError("discounted_state_distribution: init_dist has the wrong length");
  }
  const auto n = chain.rows();
  const Eigen::MatrixXd system = (Eigen::MatrixXd::Identity(n, n) - gamma * chain).transpose();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  Eigen::VectorXd d = lu.solve(init_dist);
  d /= d.sum();
  return StateDistribution(std::move(d));
}

Eigen::MatrixXd fundamental_matrix(const Eigen::MatrixXd& chain, const StateDistribution& stationary,
                                   double gamma) {
  require_square(chain, "fundamental_matrix");
  check_gamma(gamma, false, true, "fundamental_matrix");
  const auto n = chain.rows();
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma * chain +
                                 gamma * Eigen::VectorXd::Ones(n) * stationary.probs().transpose();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const double rcond = lu.rcond();
  if (!(rcond > kMinRcond)) {
    throw ConditioningError("fundamental_matrix: I - gamma P + gamma e d is numerically singular",
                            rcond);
  }
  return lu.inverse();
}

Eigen::MatrixXd mean_first_passage(const Eigen::MatrixXd& chain, const StateDistribution& stationary) {
  require_square(chain, "mean_first_passage");
  const auto n = chain.rows();
  for (Eigen::Index s = 0; s < n; ++s) {
    if (!(stationary[s] > 0.0)) {
      throw NotErgodicError("mean_first_passage: state " + std::to_string(s) +
                            " is transient under this policy");
    }
  }
  const Eigen::MatrixXd z = fundamental_matrix(chain, stationary, 1.0);
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double delta = (i == j) ? 1.0 : 0.0;
      m(i, j) = (delta - z(i, j) + z(j, j)) / stationary[j];
    }
  }
  return m;
}

StateDistribution stationary_distribution(const Mdp& mdp, const TabularPolicy& policy) {
  return stationary_distribution(induced_transition(mdp, policy));
}

DiscountedOccupancy discounted_state_distribution(const Mdp& mdp, const TabularPolicy& policy,
                                                  double gamma, const Eigen::VectorXd& init_dist) {
  check_gamma(gamma, true, true, "discounted_state_distribution");
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  if (gamma == 1.0) return {stationary_distribution(chain), true};
  return {discounted_state_distribution(chain, gamma, init_dist), false};
}

double average_reward(const Mdp& mdp, const TabularPolicy& policy) {
  return stationary_distribution(mdp, policy).probs().dot(induced_reward(mdp, policy));
}

double discounted_return(const Mdp& mdp, const TabularPolicy& policy, double gamma,
                         const Eigen::VectorXd& init_dist) {
  const auto occupancy = discounted_state_distribution(mdp, policy, gamma, init_dist);
  return occupancy.dist.probs().dot(induced_reward(mdp, policy));
}

Eigen::MatrixXd fundamental_matrix(const Mdp& mdp, const TabularPolicy& policy, double gamma) {
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  return fundamental_matrix(chain, stationary_distribution(chain), gamma);
}

namespace {

ValueFunctions values_from_chain(const Mdp& mdp, const Eigen::MatrixXd& chain,
                                 const Eigen::VectorXd& reward, const StateDistribution& d,
                                 double gamma) {
  const auto n = chain.rows();
  ValueFunctions out;
  out.gamma = gamma;
  out.eta = d.probs().dot(reward);
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma * chain +
                                 gamma * Eigen::VectorXd::Ones(n) * d.probs().transpose();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const double rcond = lu.rcond();
  if (!(rcond > kMinRcond)) {
    throw ConditioningError("value_functions: discounted Poisson system is singular", rcond);
  }
  out.v = lu.solve(reward) - Eigen::VectorXd::Constant(n, out.eta);
  out.q.resize(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      out.q(s, a) = mdp.reward(s, a) - out.eta + gamma * mdp.row(s, a).dot(out.v);
    }
  }
  out.adv = out.q.colwise() - out.v;
  return out;
}

}  // namespace

ValueFunctions value_functions(const Mdp& mdp, const TabularPolicy& policy, double gamma) {
  check_gamma(gamma, false, true, "value_functions");
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  const StateDistribution d = stationary_distribution(chain);
  return values_from_chain(mdp, chain, induced_reward(mdp, policy), d, gamma);
}

Eigen::MatrixXd mean_first_passage(const Mdp& mdp, const TabularPolicy& policy) {
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  return mean_first_passage(chain, stationary_distribution(chain));
}

namespace {

struct KemenyCheck {
  double value = 0.0;
  double row_spread = 0.0;
  double trace_gap = 0.0;
};

KemenyCheck kemeny_from(const Eigen::MatrixXd& m, const Eigen::MatrixXd& z1,
                        const StateDistribution& d) {
  const Eigen::VectorXd rows = m * d.probs();
  KemenyCheck out;
  out.value = rows.mean();
  out.row_spread = rows.maxCoeff() - rows.minCoeff();
  out.trace_gap = std::abs(out.value - z1.trace());
  return out;
}

}  // namespace

double kemeny_constant(const Mdp& mdp, const TabularPolicy& policy) {
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  const StateDistribution d = stationary_distribution(chain);
  const Eigen::MatrixXd m = mean_first_passage(chain, d);
  const Eigen::MatrixXd z1 = fundamental_matrix(chain, d, 1.0);
  const KemenyCheck k = kemeny_from(m, z1, d);
  if (k.row_spread > kIdentityTolerance || k.trace_gap > kIdentityTolerance) {
    throw ConditioningError("kemeny_constant: row spread " + std::to_string(k.row_spread) +
                                ", trace gap " + std::to_string(k.trace_gap),
                            std::numeric_limits<double>::quiet_NaN());
  }
  return k.value;
}

PolicyAnalysis analyze_policy(const Mdp& mdp, const TabularPolicy& policy, double gamma) {
  check_gamma(gamma, false, true, "analyze_policy");
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  const ErgodicityReport ergodic = is_irreducible(chain);
  if (!ergodic.ergodic) {
    throw NotErgodicError("analyze_policy: state " + std::to_string(ergodic.unreachable->second) +
                          " is unreachable from state " +
                          std::to_string(ergodic.unreachable->first));
  }
  const auto n = chain.rows();
  const Eigen::VectorXd reward = induced_reward(mdp, policy);
  const StateDistribution d = stationary_distribution(chain);
  const ValueFunctions vf = values_from_chain(mdp, chain, reward, d, gamma);

  PolicyAnalysis out{.gamma = gamma,
                     .eta_avg = vf.eta,
                     .eta_disc = 0.0,
                     .d_stat = d,
                     .d_disc = gamma == 1.0 ? d
                                            : discounted_state_distribution(chain, gamma, mdp.init_dist),
                     .v = vf.v,
                     .q = vf.q,
                     .adv = vf.adv,
                     .z = fundamental_matrix(chain, d, gamma),
                     .m = mean_first_passage(chain, d),
                     .kemeny = 0.0,
                     .poisson_shift = vf.eta,
                     .residuals = {}};
  out.eta_disc = out.d_disc.probs().dot(reward);

  const Eigen::MatrixXd z1 = gamma == 1.0 ? out.z : fundamental_matrix(chain, d, 1.0);
  const KemenyCheck k = kemeny_from(out.m, z1, d);
  out.kemeny = k.value;

  const Eigen::VectorXd e = Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd ed = e * d.probs().transpose();
  const Eigen::MatrixXd dg = Eigen::VectorXd(d.probs().cwiseInverse()).asDiagonal();
  auto& r = out.residuals;
  r.stationary = max_abs(d.probs().transpose() * chain - d.probs().transpose());
  r.zero_mean = std::abs(d.probs().dot(out.v));
  r.z_row_sums = max_abs(out.z * e - e);
  r.z_left_fixed = max_abs(d.probs().transpose() * out.z - d.probs().transpose());
  r.z_poisson = max_abs(out.z * (id - gamma * chain) - (id - gamma * ed));
  r.m_bellman = max_abs(out.m - chain * (out.m - dg) - Eigen::MatrixXd::Ones(n, n));
  r.m_diagonal = max_abs(out.m.diagonal() - d.probs().cwiseInverse());
  r.kemeny_row_spread = k.row_spread;
  r.kemeny_trace_gap = k.trace_gap;
  return out;
}

namespace {

std::vector<int> greedy_actions(const Eigen::MatrixXd& q, const std::vector<int>* incumbent) {
  constexpr double kTie = 1e-12;
  std::vector<int> actions(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const double best = q.row(s).maxCoeff();
    if (incumbent != nullptr && q(s, (*incumbent)[s]) >= best - kTie) {
      actions[s] = (*incumbent)[s];
      continue;
    }
    int pick = 0;
    while (q(s, pick) < best - kTie) ++pick;
    actions[s] = pick;
  }
  return actions;
}

template <typename Evaluate>
OptimalPolicy policy_iteration(const Mdp& mdp, Evaluate evaluate, const char* name) {
  const int cap = 10 * mdp.n_states * mdp.n_actions;
  TabularPolicy policy = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
  std::vector<int> current;
  for (int it = 0; it <= cap; ++it) {
    const auto [q, value] = evaluate(policy);
    std::vector<int> next = greedy_actions(q, current.empty() ? nullptr : &current);
    if (!current.empty() && next == current) {
      return {std::move(policy), std::move(current), value, it};
    }
    current = std::move(next);
    policy = TabularPolicy::deterministic(current, mdp.n_actions);
  }
  throw std::runtime_error(std::string(name) + ": no convergence within " + std::to_string(cap) +
                           " iterations");
}

}  // namespace

OptimalPolicy average_policy_iteration(const Mdp& mdp) {
  return policy_iteration(
      mdp,
      [&](const TabularPolicy& policy) {
        ValueFunctions vf = value_functions(mdp, policy, 1.0);
        return std::pair{std::move(vf.q), vf.eta};
      },
      "average_policy_iteration");
}

Eigen::VectorXd discounted_values(const Mdp& mdp, const TabularPolicy& policy, double gamma) {
  check_gamma(gamma, true, false, "discounted_values");
  const Eigen::MatrixXd chain = induced_transition(mdp, policy);
  const auto n = chain.rows();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(n, n) - gamma * chain);
  return lu.solve(induced_reward(mdp, policy));
}

OptimalPolicy discounted_policy_iteration(const Mdp& mdp, double gamma) {
  check_gamma(gamma, true, false, "discounted_policy_iteration");
  return policy_iteration(
      mdp,
      [&](const TabularPolicy& policy) {
        const Eigen::VectorXd v = discounted_values(mdp, policy, gamma);
        Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
        for (int s = 0; s < mdp.n_states; ++s) {
          for (int a = 0; a < mdp.n_actions; ++a) {
            q(s, a) = mdp.reward(s, a) + gamma * mdp.row(s, a).dot(v);
          }
        }
        return std::pair{std::move(q), (1.0 - gamma) * mdp.init_dist.dot(v)};
      },
      "discounted_policy_iteration");
}

}  // namespace apo
