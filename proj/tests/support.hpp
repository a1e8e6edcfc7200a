#pragma once

#include "apo/analysis.hpp"
#include "apo/mdp.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace apo::testing {

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Every deterministic policy of an MDP, in lexicographic action order.
inline std::vector<std::vector<int>> all_deterministic(int n_states, int n_actions) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(n_states), 0);
  while (true) {
    out.push_back(cur);
    int i = 0;
    while (i < n_states && ++cur[static_cast<std::size_t>(i)] == n_actions) cur[static_cast<std::size_t>(i++)] = 0;
    if (i == n_states) break;
  }
  return out;
}

/// Sum_{t <= horizon} gamma^t d0 P^t, scaled by (1 - gamma).
inline Eigen::VectorXd truncated_occupancy(const Eigen::MatrixXd& chain, double gamma, const Eigen::VectorXd& d0,
                                           int horizon) {
  Eigen::RowVectorXd term = d0.transpose();
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d0.size());
  double w = 1.0;
  for (int t = 0; t <= horizon; ++t) {
    acc += w * term;
    term = term * chain;
    w *= gamma;
  }
  return (1.0 - gamma) * acc.transpose();
}

}  // namespace apo::testing
