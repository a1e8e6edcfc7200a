// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include "apo/bounds.hpp"
#include "apo/commands.hpp"
#include "apo/envs.hpp"
#include "apo/io.hpp"
#include "apo/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace apo;

namespace {

// Pinned tolerances.
constexpr double kDifferenceTol = 1e-9;
constexpr double kInequalitySlack = 1e-9;  // applied inside check_performance_bound
constexpr double kHandCaseTol = 1e-12;
constexpr double kLemmaA3Tol = 1e-8;
constexpr double kZPropertyTol = 1e-9;
constexpr double kMBellmanTol = 1e-9;
constexpr double kStochasticTol = 1e-12;
constexpr double kPassageTol = 1e-8;
constexpr double kKemenyTol = 1e-9;
constexpr double kKemenyClosedFormTol = 1e-10;
constexpr double kXiEndpointTol = 1e-12;
constexpr double kXiGridStep = 1e-3;
constexpr double kZeroMeanTol = 1e-9;
constexpr double kGradientRelTol = 1e-4;
constexpr double kFiniteDifferenceStep = 1e-5;
constexpr int kGradientConfigs = 20;
constexpr double kTwoLoopReach = 0.24;
constexpr double kTwoLoopStay = 0.23;
constexpr long kTwoLoopStepBudget = 200000;
constexpr int kSeedsRequired = 4;
constexpr int kSeeds = 5;
constexpr double kFixedPointTol = 1e-10;
constexpr double kSweepSeconds = 60.0;
constexpr double kTwoLoopSeconds = 600.0;

static_assert(kInequalitySlack == kBoundSlack);

const std::vector<double> kGammas{0.9, 0.99, 0.999, 1.0};

struct Instance {
  Mdp mdp;
  TabularPolicy old_pi;
  TabularPolicy new_pi;
};

/// 100 random ergodic MDPs with |S| in [2, 8] and |A| in [1, 4], one policy pair each.
std::vector<Instance> sweep_instances() {
  std::vector<Instance> out;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int n = 2 + static_cast<int>(seed % 7);
    const int a = 1 + static_cast<int>((seed / 7) % 4);
    Instance inst;
    inst.mdp = random_ergodic_mdp(rng, n, a);
    inst.old_pi = random_policy(rng, n, a);
    inst.new_pi = random_policy(rng, n, a);
    out.push_back(std::move(inst));
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << detail << std::endl;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void criterion_difference_formula(const std::vector<Instance>& sweep) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const Instance& inst : sweep) {
    for (double g : kGammas) {
      worst = std::max(worst, check_performance_bound(inst.mdp, inst.old_pi, inst.new_pi, g).difference_formula_residual);
    }
  }
  const double secs = seconds_since(t0);
  report(1, "performance difference formula", worst <= kDifferenceTol && secs < kSweepSeconds,
         fmt("max |LHS - RHS| = %.3e (tol %.0e) over %zu pairs x %zu gammas in %.2f s", worst, kDifferenceTol,
             sweep.size(), kGammas.size(), secs));
}

void criterion_bounds(const std::vector<Instance>& sweep) {
  int violations = 0;
  for (const Instance& inst : sweep) {
    for (double g : kGammas) {
      const BoundReport r = check_performance_bound(inst.mdp, inst.old_pi, inst.new_pi, g);
      violations += !r.holds_lower + !r.holds_upper + !r.holds_prop1 + !r.holds_prop2;
    }
  }
  const BoundReport hand =
      check_performance_bound(make_two_state(), TabularPolicy::uniform(2, 2), two_state_policy(0.8, 0.2), 1.0);
  const bool hand_ok = std::abs(hand.actual_diff - 0.3) <= kHandCaseTol && std::abs(hand.lower - 0.12) <= kHandCaseTol &&
                       std::abs(hand.upper - 0.48) <= kHandCaseTol && hand.all_hold();
  report(2, "two-sided improvement bound", violations == 0 && hand_ok,
         fmt("%d inequality violations (slack %.0e); TwoState case actual_diff = %.15g in [%.15g, %.15g]", violations,
             kInequalitySlack, hand.actual_diff, hand.lower, hand.upper));
}

void criterion_identities(const std::vector<Instance>& sweep) {
  double a3 = 0.0, z = 0.0, m = 0.0, stoch = 0.0, passage = 0.0;
  int passage_checked = 0;
  for (const Instance& inst : sweep) {
    for (double g : kGammas) {
      a3 = std::max(a3, check_distribution_identity(inst.mdp, inst.old_pi, inst.new_pi, g));
      for (const TabularPolicy* pi : {&inst.old_pi, &inst.new_pi}) {
        const MatrixIdentityReport r = check_matrix_identities(inst.mdp, *pi, g);
        z = std::max({z, r.z_row_sums, r.z_left_fixed, r.z_poisson});
        m = std::max(m, r.m_bellman);
        stoch = std::max({stoch, r.stochastic_row_sums, r.stochastic_negativity});
        if (!r.passage_identity_skipped) {
          passage = std::max(passage, r.passage_identity);
          ++passage_checked;
        }
      }
    }
  }
  const bool pass = a3 <= kLemmaA3Tol && z <= kZPropertyTol && m <= kMBellmanTol && stoch <= kStochasticTol &&
                    passage <= kPassageTol && passage_checked > 0;
  report(3, "matrix identities", pass,
         fmt("occupancy-shift identity %.2e, Z properties %.2e, M Bellman %.2e, M D^-1/kappa stochastic %.2e, "
             "passage identity %.2e on %d cases",
             a3, z, m, stoch, passage, passage_checked));
}

void criterion_kemeny(const std::vector<Instance>& sweep) {
  double spread = 0.0, trace_gap = 0.0;
  for (const Instance& inst : sweep) {
    for (const TabularPolicy* pi : {&inst.old_pi, &inst.new_pi}) {
      const PolicyAnalysis pa = analyze_policy(inst.mdp, *pi, 1.0);
      spread = std::max(spread, pa.residuals.kemeny_row_spread);
      trace_gap = std::max(trace_gap, pa.residuals.kemeny_trace_gap);
    }
  }
  double closed = 0.0;
  for (int i = 1; i <= 20; ++i) {
    for (int j = 1; j <= 20; ++j) {
      const double p = 0.05 * i, q = 0.05 * j;
      closed = std::max(closed, std::abs(kemeny_constant(make_two_state(), two_state_policy(p, q)) - (1.0 + 1.0 / (p + q))));
    }
  }
  report(4, "Kemeny invariants",
         spread <= kKemenyTol && trace_gap <= kKemenyTol && closed <= kKemenyClosedFormTol,
         fmt("row spread %.2e, |kappa - trace Z| %.2e, two-state closed form %.2e over 400 (p, q)", spread, trace_gap,
             closed));
}

void criterion_xi() {
  bool pass = true;
  std::ostringstream detail;
  const std::vector<double> grid = unit_grid(kXiGridStep);
  for (double kappa : {1.2, 1.5, 2.0, 5.0, 20.0}) {
    const double endpoint = std::abs(xi_gamma(1.0, kappa) - (kappa - 1.0));
    const std::vector<XiPoint> prof = xi_profile(kappa, grid);
    XiPoint best = prof.front();
    for (const XiPoint& p : prof) {
      if (p.xi > best.xi) best = p;
    }
    const double cap = 2.0 * (kappa - 1.0);
    const double argmax_gap = std::abs(best.gamma - xi_argmax(kappa));
    const bool ok = endpoint <= kXiEndpointTol && best.xi <= cap + kXiEndpointTol && argmax_gap <= kXiGridStep + 1e-12;
    pass = pass && ok;
    detail << " kappa=" << kappa << ": max " << best.xi << " at " << best.gamma << " (cap " << cap << ");";
  }
  report(5, "xi coefficient profile", pass, detail.str());
}

void criterion_zero_mean(const std::vector<Instance>& sweep) {
  double worst = 0.0;
  for (const Instance& inst : sweep) {
    for (const TabularPolicy* pi : {&inst.old_pi, &inst.new_pi}) {
      const Eigen::VectorXd d = stationary_distribution(inst.mdp, *pi).probs();
      for (double g : kGammas) worst = std::max(worst, std::abs(d.dot(value_functions(inst.mdp, *pi, g).v)));
    }
  }
  report(6, "zero-mean values", worst <= kZeroMeanTol, fmt("max |d . V| = %.3e (tol %.0e)", worst, kZeroMeanTol));
}

/// ||fd - analytic|| / max(||fd||, ||analytic||) for a scalar loss of the flat parameter vector.
double relative_gradient_error(MlpParams params, const std::function<ad::Var(ad::Tape&, const MlpParams&,
                                                                           const std::vector<ad::Var>&)>& loss) {
  ad::Tape tape;
  const std::vector<ad::Var> vars = bind(tape, params);
  const Eigen::VectorXd analytic = flatten(backward(params, tape, loss(tape, params, vars)));
  const Eigen::VectorXd theta = flatten(params);
  Eigen::VectorXd fd(theta.size());
  auto eval = [&](const Eigen::VectorXd& t) {
    unflatten(params, t);
    ad::Tape tp;
    return loss(tp, params, bind(tp, params)).scalar();
  };
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd t = theta;
    t(k) += kFiniteDifferenceStep;
    const double up = eval(t);
    t(k) -= 2.0 * kFiniteDifferenceStep;
    fd(k) = (up - eval(t)) / (2.0 * kFiniteDifferenceStep);
  }
  const double scale = std::max({fd.norm(), analytic.norm(), 1e-300});
  return (fd - analytic).norm() / scale;
}

void criterion_gradients() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst_policy = 0.0, worst_value = 0.0;
  for (int c = 0; c < kGradientConfigs; ++c) {
    const int obs_dim = 2 + c % 3;
    const int n = 16 + c;
    const bool gaussian = c % 2 == 1;
    const int out = gaussian ? 1 + c % 2 : 2 + c % 3;
    const std::vector<int> hidden{4 + c % 4, 3 + c % 2};
    MlpParams policy = init_mlp(rng, obs_dim, out, gaussian ? HeadKind::Gaussian : HeadKind::Categorical, hidden);
    if (gaussian) {
      for (Eigen::Index k = 0; k < policy.tensors.back().value.size(); ++k) policy.tensors.back().value(k) = 0.3 * unit(rng);
    }
    const MlpParams value = init_mlp(rng, obs_dim, 1, HeadKind::Value, hidden);

    RolloutBatch batch;
    batch.observations = Eigen::MatrixXd::NullaryExpr(n, obs_dim, [&] { return unit(rng); });
    batch.actions.resize(n, gaussian ? out : 1);
    for (int i = 0; i < n; ++i) {
      batch.actions.row(i) = sample(policy, batch.observations.row(i).transpose(), rng).transpose();
    }
    batch.rewards = Eigen::VectorXd::NullaryExpr(n, [&] { return unit(rng); });
    batch.advantage = Eigen::VectorXd::NullaryExpr(n, [&] { return unit(rng); });
    batch.value_target = Eigen::VectorXd::NullaryExpr(n, [&] { return 2.0 * unit(rng); });
    // Behaviour log-probs away from the current ones, so that both the clipped
    // and unclipped branches of the surrogate are exercised.
    batch.old_log_prob = log_prob_batch(policy, batch.observations, batch.actions);
    for (int i = 0; i < n; ++i) batch.old_log_prob(i) += 0.4 * unit(rng);

    worst_policy = std::max(worst_policy, relative_gradient_error(policy, [&](ad::Tape& t, const MlpParams& p,
                                                                              const std::vector<ad::Var>& v) {
                              return policy_loss(t, p, v, batch, 0.2);
                            }));
    worst_value = std::max(worst_value, relative_gradient_error(value, [&](ad::Tape& t, const MlpParams& p,
                                                                           const std::vector<ad::Var>& v) {
                             return value_loss(t, p, v, batch);
                           }));
  }
  report(7, "loss gradients", worst_policy <= kGradientRelTol && worst_value <= kGradientRelTol,
         fmt("max relative error policy %.2e, value %.2e over %d configurations each (tol %.0e)", worst_policy,
             worst_value, kGradientConfigs, kGradientRelTol));
}

struct ArmResult {
  std::string name;
  std::vector<double> final_eval;
  int hits = 0;
};

TrainConfig twoloop_config(const std::filesystem::path& path, std::uint64_t seed) {
  TrainConfig c = read_train_config_file(path);
  c.seed = seed;
  return c;
}

void criterion_twoloop(const std::filesystem::path& configs) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, std::filesystem::path>> arms{
      {"APO", configs / "twoloop_apo.json"},
      {"PPO gamma=0.9", configs / "twoloop_ppo_g0.9.json"},
      {"PPO gamma=0.99", configs / "twoloop_ppo_g0.99.json"}};
  std::vector<TrainConfig> all;
  for (const auto& arm : arms) {
    for (int s = 0; s < kSeeds; ++s) all.push_back(twoloop_config(arm.second, static_cast<std::uint64_t>(s)));
  }
  const std::vector<TrainLog> logs = train_many(env_factory("twoloop"), all);
  const double secs = seconds_since(t0);

  bool budget_ok = true;
  std::vector<ArmResult> results;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmResult r;
    r.name = arms[a].first;
    for (int s = 0; s < kSeeds; ++s) {
      const TrainLog& log = logs[a * kSeeds + static_cast<std::size_t>(s)];
      budget_ok = budget_ok && log.rows.back().env_steps <= kTwoLoopStepBudget;
      const double final_eval = log.final_eval();
      r.final_eval.push_back(final_eval);
      r.hits += a == 1 ? final_eval <= kTwoLoopStay : final_eval >= kTwoLoopReach;
    }
    results.push_back(r);
  }
  std::ostringstream detail;
  for (const ArmResult& r : results) {
    detail << ' ' << r.name << " final eval [";
    for (std::size_t i = 0; i < r.final_eval.size(); ++i) detail << (i ? " " : "") << r.final_eval[i];
    detail << "] " << r.hits << '/' << kSeeds << ';';
  }
  detail << fmt(" %.0f s", secs);
  const bool pass = budget_ok && secs < kTwoLoopSeconds && results[0].hits >= kSeedsRequired &&
                    results[1].hits >= kSeedsRequired && results[2].hits >= kSeedsRequired;
  report(8, "TwoLoop separation", pass, detail.str());
}

void criterion_nu_ablation(const std::filesystem::path& configs) {
  const TrainConfig base = read_train_config_file(configs / "ablation_twostate.json");
  const std::vector<double> nus{0.0, 0.03, 0.1, 0.3, 1.0};
  std::vector<TrainConfig> all;
  for (double nu : nus) {
    for (int s = 0; s < kSeeds; ++s) {
      TrainConfig c = base;
      c.algo = Algo::APO;
      c.nu = nu;
      c.seed = static_cast<std::uint64_t>(s);
      all.push_back(c);
    }
  }
  const std::vector<TrainLog> logs = train_many(env_factory("twostate"), all);
  std::vector<std::vector<double>> drift(nus.size());
  std::vector<double> mean_drift(nus.size(), 0.0);
  for (std::size_t i = 0; i < nus.size(); ++i) {
    for (int s = 0; s < kSeeds; ++s) {
      const double d = mean_abs_b_tail(logs[i * kSeeds + static_cast<std::size_t>(s)], 100);
      drift[i].push_back(d);
      mean_drift[i] += d / kSeeds;
    }
  }
  int smaller = 0;
  for (int s = 0; s < kSeeds; ++s) smaller += drift.back()[static_cast<std::size_t>(s)] < drift.front()[static_cast<std::size_t>(s)];
  const bool nu0_max = std::max_element(mean_drift.begin(), mean_drift.end()) == mean_drift.begin();
  std::ostringstream detail;
  detail << "nu=1 below nu=0 on " << smaller << '/' << kSeeds << " seeds; mean |b| over the last 100 iterations:";
  for (std::size_t i = 0; i < nus.size(); ++i) detail << " nu=" << nus[i] << ' ' << mean_drift[i] << ';';
  report(9, "nu ablation drift", smaller >= kSeedsRequired && nu0_max, detail.str());
}

/// Tabular networks (no hidden layer) on one-hot states: the critic holds V exactly
/// and the policy is greedy on `actions` with logit margin 60.
double perfect_critic_residual(const Mdp& mdp, const std::vector<int>& actions) {
  const TabularPolicy pi = TabularPolicy::deterministic(actions, mdp.n_actions);
  const ValueFunctions vf = value_functions(mdp, pi, 1.0);
  std::mt19937_64 rng(0);
  MlpParams value = init_mlp(rng, mdp.n_states, 1, HeadKind::Value, {});
  value.weight(0) = vf.v;
  value.bias(0).setZero();
  MlpParams policy = init_mlp(rng, mdp.n_states, mdp.n_actions, HeadKind::Categorical, {});
  policy.weight(0).setZero();
  policy.bias(0).setZero();
  for (int s = 0; s < mdp.n_states; ++s) policy.weight(0)(s, actions[static_cast<std::size_t>(s)]) = 60.0;

  auto env = tabular_env(mdp, std::mt19937_64(1));
  env->reset();
  RolloutBatch batch = collect_rollout(*env, policy, value, 64, rng);
  compute_residuals_and_advantages(batch, vf.eta, 0.9);
  compute_average_value_targets(batch, vf.eta, 0.0, 0.3);
  ad::Tape tape;
  const auto vars = bind(tape, policy);
  const Eigen::VectorXd grad = flatten(backward(policy, tape, policy_loss(tape, policy, vars, batch, 0.2)));
  return std::max({batch.td_residual.cwiseAbs().maxCoeff(), batch.advantage.cwiseAbs().maxCoeff(),
                   grad.cwiseAbs().maxCoeff(), (batch.value_target - batch.values).cwiseAbs().maxCoeff()});
}

void criterion_fixed_point() {
  const double loop = perfect_critic_residual(make_two_loop(), {kTwoLoopLong, 0, 0, 0});
  const double two = perfect_critic_residual(make_two_state(), {1, 1});
  report(10, "perfect-critic fixed point", loop <= kFixedPointTol && two <= kFixedPointTol,
         fmt("max |residual|, |advantage|, |policy gradient| = %.2e on TwoLoop, %.2e on TwoState (tol %.0e)", loop,
             two, kFixedPointTol));
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path configs = argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::path(APO_CONFIG_DIR);
  const std::vector<Instance> sweep = sweep_instances();
  criterion_difference_formula(sweep);
  criterion_bounds(sweep);
  criterion_identities(sweep);
  criterion_kemeny(sweep);
  criterion_xi();
  criterion_zero_mean(sweep);
  criterion_gradients();
  criterion_twoloop(configs);
  criterion_nu_ablation(configs);
  criterion_fixed_point();
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
