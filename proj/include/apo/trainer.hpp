#pragma once

#include "apo/autodiff.hpp"
#include "apo/envs.hpp"
#include "apo/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace apo {

enum class Algo { APO, PPO };

std::string to_string(Algo algo);
Algo parse_algo(const std::string& name);

struct TrainConfig {
  Algo algo = Algo::APO;
  double alpha = 0.1;        // moving-average step for eta_hat and b
  double beta = 3e-4;        // Adam learning rate
  double lambda = 0.9;       // GAE parameter
  double nu = 0.3;           // average value constraint coefficient
  double clip_eps = 0.2;
  int iterations = 100;
  int rollout_length = 2048;
  int epochs = 10;
  int minibatch = 256;
  double gamma = 0.99;       // PPO only
  std::uint64_t seed = 0;
  double max_grad_norm = 10.0;
  std::vector<int> hidden = kDefaultHidden;
  int eval_interval = 10;    // iterations between evaluations; the last iteration is always evaluated
  int eval_horizon = 1000;
  int eval_episodes = 10;
  bool train_policy = true;  // false: hold the initial policy fixed and fit only the critic

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
};

/// Independent RNG seeds derived from one master seed by a splitmix64 counter.
struct SeedStreams {
  std::uint64_t env = 0;
  std::uint64_t init = 0;
  std::uint64_t sampling = 0;
  std::uint64_t eval = 0;
};

SeedStreams split_seed(std::uint64_t master);

struct RolloutBatch {
  Eigen::MatrixXd observations;       // N x obs_dim
  Eigen::MatrixXd actions;            // N x action_dim (discrete: the index)
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_observations;
  Eigen::VectorXd old_log_prob;
  Eigen::VectorXd values;             // V(s_n) under the collection-time critic
  Eigen::VectorXd next_values;        // V(s_{n+1}) under the collection-time critic
  Eigen::VectorXd td_residual;
  Eigen::VectorXd advantage;
  Eigen::VectorXd value_target;

  [[nodiscard]] Eigen::Index size() const { return rewards.size(); }
};

struct TrainerState {
  double eta_hat = 0.0;
  double b = 0.0;
  MlpParams policy;
  MlpParams value;
  AdamState policy_opt;
  AdamState value_opt;
  int iteration = 0;
  long env_steps = 0;
};

/// Raised when a loss turns non-finite; the message carries a state dump.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fresh networks for `env` with eta_hat = b = 0.
TrainerState init_trainer(const Environment& env, const TrainConfig& config, std::mt19937_64& init_rng);

/// N consecutive transitions from the current environment state, no resets.
RolloutBatch collect_rollout(Environment& env, const MlpParams& policy, const MlpParams& value, int n,
                             std::mt19937_64& rng);

void update_eta_hat(TrainerState& state, const RolloutBatch& batch, double alpha);
void update_b(TrainerState& state, const RolloutBatch& batch, double alpha);

/**
 * delta_n = r_n - offset + discount V(s_{n+1}) - V(s_n) and
 * A_n = delta_n + discount * lambda * A_{n+1}, truncated at the batch end.
 * The average-reward form uses (offset, discount) = (eta_hat, 1), the
 * discounted form (0, gamma).
 */
void compute_td_and_advantages(RolloutBatch& batch, double offset, double discount, double lambda);

/// Average-reward residuals and advantages.
void compute_residuals_and_advantages(RolloutBatch& batch, double eta_hat, double lambda);
/// Discounted residuals and GAE(gamma, lambda).
void compute_discounted_residuals_and_advantages(RolloutBatch& batch, double gamma, double lambda);

/// Frozen critic targets r_n - offset + discount V(s_{n+1}) - shift.
void compute_value_targets(RolloutBatch& batch, double offset, double discount, double shift);
/// r - eta_hat + V(s') - nu b.
void compute_average_value_targets(RolloutBatch& batch, double eta_hat, double b, double nu);
/// r + gamma V(s').
void compute_discounted_value_targets(RolloutBatch& batch, double gamma);

/// mean over `rows` of 1/2 (target - V(s))^2; an empty `rows` means the whole batch.
ad::Var value_loss(ad::Tape& tape, const MlpParams& value, const std::vector<ad::Var>& vars,
                   const RolloutBatch& batch, const std::vector<int>& rows = {});

/// -mean over `rows` of min(w A, clip(w, 1 - eps, 1 + eps) A), w = exp(log pi - old log pi).
ad::Var policy_loss(ad::Tape& tape, const MlpParams& policy, const std::vector<ad::Var>& vars,
                    const RolloutBatch& batch, double clip_eps, const std::vector<int>& rows = {});

struct EvalResult {
  double avg_reward = 0.0;   // reward per step, averaged over episodes
  double mean_return = 0.0;  // undiscounted return per episode
};

/// Deterministic rollouts: each episode resets `env` and acts with the policy mode.
EvalResult evaluate(Environment& env, const MlpParams& policy, int horizon, int episodes);

struct TrainLogRow {
  int iteration = 0;
  long env_steps = 0;
  double eta_hat = 0.0;
  double b = 0.0;
  double mean_value = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double eval_avg_reward = 0.0;
  bool evaluated = false;
};

struct TrainLog {
  TrainConfig config;
  SeedStreams seeds;
  std::vector<TrainLogRow> rows;
  TrainerState final_state;

  /// Most recent evaluated reward; NaN if none was recorded.
  [[nodiscard]] double final_eval() const;
};

/// Called after every iteration; useful for progress output.
using IterationCallback = std::function<void(const TrainLogRow&)>;

/// Runs the configured algorithm. The environment never resets between
/// iterations; evaluation uses a separate instance with its own seed.
TrainLog train(const EnvFactory& factory, const TrainConfig& config, const IterationCallback& on_iteration = {});

/// CSV with a leading "# seeds ..." comment line and the log columns.
void write_train_log_csv(std::ostream& os, const TrainLog& log);

}  // namespace apo
