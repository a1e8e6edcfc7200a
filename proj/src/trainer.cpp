#include "apo/trainer.hpp"

#include "apo/format.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace apo {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("TrainConfig: " + what);
}

std::vector<int> all_rows(Eigen::Index n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

int action_width(const ActionSpace& space) { return space.kind == ActionKind::Discrete ? 1 : space.size; }

std::string dump_state(const TrainerState& s, const char* stage, double loss) {
  std::ostringstream os;
  os << std::setprecision(17) << stage << " loss became non-finite (" << loss << ") at iteration " << s.iteration
     << ", env_steps " << s.env_steps << "; eta_hat " << s.eta_hat << ", b " << s.b
     << ", policy params finite: " << (s.policy.all_finite() ? "yes" : "no")
     << ", value params finite: " << (s.value.all_finite() ? "yes" : "no") << ", policy adam step "
     << s.policy_opt.step << ", value adam step " << s.value_opt.step;
  return os.str();
}

double sgd_epochs(MlpParams& params, AdamState& opt, const TrainConfig& cfg, std::mt19937_64& rng,
                  const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&, const std::vector<int>&)>& loss_fn,
                  Eigen::Index n, const TrainerState& state, const char* stage) {
  std::vector<int> order = all_rows(n);
  double total = 0.0;
  int count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.minibatch) {
      const Eigen::Index stop = std::min<Eigen::Index>(start + cfg.minibatch, n);
      const std::vector<int> rows(order.begin() + start, order.begin() + stop);
      ad::Tape tape;
      const std::vector<ad::Var> vars = bind(tape, params);
      const ad::Var loss = loss_fn(tape, vars, rows);
      const double value = loss.scalar();
      if (!std::isfinite(value)) throw TrainingDivergedError(dump_state(state, stage, value));
      Gradients grads = clip_global_norm(backward(params, tape, loss), cfg.max_grad_norm);
      adam_step(params, grads, opt, cfg.beta);
      total += value;
      ++count;
    }
  }
  return count > 0 ? total / count : 0.0;
}

}  // namespace

std::string to_string(Algo algo) { return algo == Algo::APO ? "APO" : "PPO"; }

Algo parse_algo(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "APO") return Algo::APO;
  if (upper == "PPO") return Algo::PPO;
  throw std::invalid_argument("unknown algorithm '" + name + "' (expected APO or PPO)");
}

void TrainConfig::validate() const {
  require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
  require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  require(nu >= 0.0 && std::isfinite(nu), "nu must be non-negative");
  require(clip_eps > 0.0 && clip_eps < 1.0, "clip_eps must lie in (0, 1)");
  require(iterations >= 1, "iterations must be at least 1");
  require(rollout_length >= 2, "rollout_length must be at least 2");
  require(epochs >= 1, "epochs must be at least 1");
  require(minibatch >= 1, "minibatch must be at least 1");
  require(rollout_length >= minibatch, "rollout_length must be at least minibatch");
  if (algo == Algo::PPO) require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1) for PPO");
  require(max_grad_norm > 0.0, "max_grad_norm must be positive");
  for (int h : hidden) require(h > 0, "hidden sizes must be positive");
  require(eval_interval >= 1, "eval_interval must be at least 1");
  require(eval_horizon >= 1, "eval_horizon must be at least 1");
  require(eval_episodes >= 1, "eval_episodes must be at least 1");
}

SeedStreams split_seed(std::uint64_t master) {
  std::uint64_t state = master;
  SeedStreams s;
  s.env = splitmix64(state);
  s.init = splitmix64(state);
  s.sampling = splitmix64(state);
  s.eval = splitmix64(state);
  return s;
}

TrainerState init_trainer(const Environment& env, const TrainConfig& config, std::mt19937_64& init_rng) {
  const ActionSpace space = env.action_space();
  const HeadKind head = space.kind == ActionKind::Discrete ? HeadKind::Categorical : HeadKind::Gaussian;
  TrainerState s;
  s.policy = init_mlp(init_rng, env.observation_dim(), space.size, head, config.hidden);
  s.value = init_mlp(init_rng, env.observation_dim(), 1, HeadKind::Value, config.hidden);
  s.policy_opt = adam_init(s.policy);
  s.value_opt = adam_init(s.value);
  return s;
}

RolloutBatch collect_rollout(Environment& env, const MlpParams& policy, const MlpParams& value, int n,
                             std::mt19937_64& rng) {
  if (n < 2) throw std::invalid_argument("collect_rollout: need at least 2 steps");
  const int obs_dim = env.observation_dim();
  const int act_dim = action_width(env.action_space());
  RolloutBatch batch;
  batch.observations.resize(n, obs_dim);
  batch.next_observations.resize(n, obs_dim);
  batch.actions.resize(n, act_dim);
  batch.rewards.resize(n);
  batch.old_log_prob.resize(n);

  Eigen::VectorXd obs = env.observation();
  for (int i = 0; i < n; ++i) {
    const ActionDistribution dist = policy_forward(policy, obs);
    const Eigen::VectorXd action = sample(dist, rng);
    const StepResult step = env.step(action);
    batch.observations.row(i) = obs.transpose();
    batch.actions.row(i) = action.transpose();
    batch.old_log_prob(i) = log_prob(dist, action);
    batch.rewards(i) = step.reward;
    batch.next_observations.row(i) = step.observation.transpose();
    obs = step.observation;
  }
  batch.values = value_forward(value, batch.observations);
  batch.next_values = value_forward(value, batch.next_observations);
  return batch;
}

void update_eta_hat(TrainerState& state, const RolloutBatch& batch, double alpha) {
  if (batch.size() == 0) throw std::invalid_argument("update_eta_hat: empty batch");
  state.eta_hat = (1.0 - alpha) * state.eta_hat + alpha * batch.rewards.mean();
}

void update_b(TrainerState& state, const RolloutBatch& batch, double alpha) {
  if (batch.values.size() == 0) throw std::invalid_argument("update_b: empty batch");
  state.b = (1.0 - alpha) * state.b + alpha * batch.values.mean();
}

void compute_td_and_advantages(RolloutBatch& batch, double offset, double discount, double lambda) {
  const Eigen::Index n = batch.size();
  if (batch.values.size() != n || batch.next_values.size() != n) {
    throw std::invalid_argument("compute_td_and_advantages: values not filled");
  }
  batch.td_residual = batch.rewards.array() - offset + discount * batch.next_values.array() - batch.values.array();
  batch.advantage.resize(n);
  double running = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    running = batch.td_residual(i) + discount * lambda * running;
    batch.advantage(i) = running;
  }
}

void compute_residuals_and_advantages(RolloutBatch& batch, double eta_hat, double lambda) {
  compute_td_and_advantages(batch, eta_hat, 1.0, lambda);
}

void compute_discounted_residuals_and_advantages(RolloutBatch& batch, double gamma, double lambda) {
  compute_td_and_advantages(batch, 0.0, gamma, lambda);
}

void compute_value_targets(RolloutBatch& batch, double offset, double discount, double shift) {
  batch.value_target = batch.rewards.array() - offset + discount * batch.next_values.array() - shift;
}

void compute_average_value_targets(RolloutBatch& batch, double eta_hat, double b, double nu) {
  compute_value_targets(batch, eta_hat, 1.0, nu * b);
}

void compute_discounted_value_targets(RolloutBatch& batch, double gamma) {
  compute_value_targets(batch, 0.0, gamma, 0.0);
}

ad::Var value_loss(ad::Tape& tape, const MlpParams& value, const std::vector<ad::Var>& vars,
                   const RolloutBatch& batch, const std::vector<int>& rows) {
  if (batch.value_target.size() != batch.size()) throw std::invalid_argument("value_loss: targets not computed");
  const std::vector<int> idx = rows.empty() ? all_rows(batch.size()) : rows;
  const ad::Var v = mlp_graph(tape, value, vars, batch.observations(idx, Eigen::all));
  const ad::Var target = tape.constant(batch.value_target(idx));
  return 0.5 * tape.mean(tape.square(target - v));
}

ad::Var policy_loss(ad::Tape& tape, const MlpParams& policy, const std::vector<ad::Var>& vars,
                    const RolloutBatch& batch, double clip_eps, const std::vector<int>& rows) {
  if (batch.advantage.size() != batch.size()) throw std::invalid_argument("policy_loss: advantages not computed");
  const std::vector<int> idx = rows.empty() ? all_rows(batch.size()) : rows;
  const ad::Var logp =
      log_prob_graph(tape, policy, vars, batch.observations(idx, Eigen::all), batch.actions(idx, Eigen::all));
  const ad::Var ratio = tape.exp(logp - tape.constant(batch.old_log_prob(idx)));
  const ad::Var adv = tape.constant(batch.advantage(idx));
  const ad::Var surrogate = tape.min(ratio * adv, tape.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv);
  return -tape.mean(surrogate);
}

EvalResult evaluate(Environment& env, const MlpParams& policy, int horizon, int episodes) {
  if (horizon < 1 || episodes < 1) throw std::invalid_argument("evaluate: horizon and episodes must be positive");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Eigen::VectorXd obs = env.reset();
    for (int t = 0; t < horizon; ++t) {
      const StepResult step = env.step(mode(policy, obs));
      total += step.reward;
      obs = step.observation;
    }
  }
  EvalResult r;
  r.mean_return = total / episodes;
  r.avg_reward = r.mean_return / horizon;
  return r;
}

double TrainLog::final_eval() const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->evaluated) return it->eval_avg_reward;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

TrainLog train(const EnvFactory& factory, const TrainConfig& config, const IterationCallback& on_iteration) {
  config.validate();
  TrainLog log;
  log.config = config;
  log.seeds = split_seed(config.seed);

  std::unique_ptr<Environment> env = factory(std::mt19937_64(log.seeds.env));
  std::unique_ptr<Environment> eval_env = factory(std::mt19937_64(log.seeds.eval));
  std::mt19937_64 init_rng(log.seeds.init);
  std::mt19937_64 sampling_rng(log.seeds.sampling);

  TrainerState& s = log.final_state;
  s = init_trainer(*env, config, init_rng);
  env->reset();

  const bool average = config.algo == Algo::APO;
  for (int it = 0; it < config.iterations; ++it) {
    s.iteration = it;
    RolloutBatch batch = collect_rollout(*env, s.policy, s.value, config.rollout_length, sampling_rng);
    s.env_steps += batch.size();

    update_eta_hat(s, batch, config.alpha);
    update_b(s, batch, config.alpha);
    if (average) {
      compute_residuals_and_advantages(batch, s.eta_hat, config.lambda);
      compute_average_value_targets(batch, s.eta_hat, s.b, config.nu);
    } else {
      compute_discounted_residuals_and_advantages(batch, config.gamma, config.lambda);
      compute_discounted_value_targets(batch, config.gamma);
    }

    TrainLogRow row;
    row.iteration = it;
    row.env_steps = s.env_steps;
    row.eta_hat = s.eta_hat;
    row.b = s.b;
    row.mean_value = batch.values.mean();

    if (config.train_policy) {
      row.policy_loss = sgd_epochs(
          s.policy, s.policy_opt, config, sampling_rng,
          [&](ad::Tape& tape, const std::vector<ad::Var>& vars, const std::vector<int>& rows) {
            return policy_loss(tape, s.policy, vars, batch, config.clip_eps, rows);
          },
          batch.size(), s, "policy");
      row.approx_kl =
          (batch.old_log_prob - log_prob_batch(s.policy, batch.observations, batch.actions)).mean();
    }
    row.value_loss = sgd_epochs(
        s.value, s.value_opt, config, sampling_rng,
        [&](ad::Tape& tape, const std::vector<ad::Var>& vars, const std::vector<int>& rows) {
          return value_loss(tape, s.value, vars, batch, rows);
        },
        batch.size(), s, "value");

    if ((it + 1) % config.eval_interval == 0 || it + 1 == config.iterations) {
      row.eval_avg_reward = evaluate(*eval_env, s.policy, config.eval_horizon, config.eval_episodes).avg_reward;
      row.evaluated = true;
    }
    log.rows.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  s.iteration = config.iterations;
  return log;
}

void write_train_log_csv(std::ostream& os, const TrainLog& log) {
  os << "# seeds: master=" << log.config.seed << " env=" << log.seeds.env << " init=" << log.seeds.init
     << " sampling=" << log.seeds.sampling << " eval=" << log.seeds.eval << " (splitmix64 counter split)\n";
  os << "iteration,env_steps,eta_hat,b,mean_value,policy_loss,value_loss,approx_kl,eval_avg_reward\n";
  for (const auto& r : log.rows) {
    os << r.iteration << ',' << r.env_steps;
    for (double x : {r.eta_hat, r.b, r.mean_value, r.policy_loss, r.value_loss, r.approx_kl}) {
      os << ',' << format_number(x);
    }
    os << ',';
    if (r.evaluated) os << format_number(r.eval_avg_reward);
    os << '\n';
  }
}

}  // namespace apo
