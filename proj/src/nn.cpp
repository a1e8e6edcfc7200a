#include "apo/nn.hpp"

#include <cmath>
#include <numbers>

namespace apo {

namespace {

void check_dims(const MlpParams& params, const Eigen::MatrixXd& observations) {
  if (observations.cols() != params.in_dim) {
    throw std::invalid_argument("mlp: observation width " + std::to_string(observations.cols()) +
                                " does not match input dimension " + std::to_string(params.in_dim));
  }
}

int action_index(const Eigen::VectorXd& action, int n_actions) {
  if (action.size() != 1) throw std::invalid_argument("categorical: action must be a single index");
  const double a = action(0);
  if (!(a >= 0.0 && a < n_actions) || a != std::floor(a)) {
    throw std::out_of_range("categorical: action index out of range");
  }
  return static_cast<int>(a);
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

double half_log_two_pi() { return 0.5 * std::log(2.0 * std::numbers::pi); }

}  // namespace

Eigen::Index MlpParams::n_parameters() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

bool MlpParams::all_finite() const {
  for (const auto& t : tensors) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

MlpParams init_mlp(std::mt19937_64& rng, int in_dim, int out_dim, HeadKind head,
                   const std::vector<int>& hidden) {
  if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("init_mlp: dimensions must be positive");
  if (head == HeadKind::Value && out_dim != 1) throw std::invalid_argument("init_mlp: value head has one output");
  for (int h : hidden) {
    if (h <= 0) throw std::invalid_argument("init_mlp: hidden sizes must be positive");
  }
  MlpParams p;
  p.head = head;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.hidden = hidden;

  std::vector<int> sizes{in_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out_dim);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-limit, limit);
    Eigen::MatrixXd w(fan_in, fan_out);
    // Fill in row-major order so the draw sequence does not depend on storage order.
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) w(i, j) = unif(rng);
    }
    const std::string prefix = "l" + std::to_string(l);
    p.tensors.push_back({prefix + ".weight", std::move(w)});
    p.tensors.push_back({prefix + ".bias", Eigen::MatrixXd::Zero(1, fan_out)});
  }
  if (head == HeadKind::Gaussian) p.tensors.push_back({"log_std", Eigen::MatrixXd::Zero(1, out_dim)});
  return p;
}

Eigen::MatrixXd mlp_output(const MlpParams& params, const Eigen::MatrixXd& observations) {
  check_dims(params, observations);
  Eigen::MatrixXd h = observations;
  for (int l = 0; l < params.n_layers(); ++l) {
    Eigen::MatrixXd next = h * params.weight(l);
    next.rowwise() += params.bias(l).row(0);
    if (l + 1 < params.n_layers()) next = next.array().tanh();
    h = std::move(next);
  }
  return h;
}

Eigen::VectorXd value_forward(const MlpParams& params, const Eigen::MatrixXd& observations) {
  if (params.head != HeadKind::Value) throw std::invalid_argument("value_forward: not a value network");
  return mlp_output(params, observations).col(0);
}

ActionDistribution policy_forward(const MlpParams& params, const Eigen::VectorXd& observation) {
  const Eigen::VectorXd out = mlp_output(params, observation.transpose()).row(0).transpose();
  ActionDistribution dist;
  dist.kind = params.head;
  switch (params.head) {
    case HeadKind::Categorical:
      dist.probs = log_softmax(out).array().exp();
      break;
    case HeadKind::Gaussian:
      dist.mean = out;
      dist.log_std = params.log_std().row(0).transpose();
      break;
    case HeadKind::Value:
      throw std::invalid_argument("policy_forward: value network has no action distribution");
  }
  return dist;
}

double log_prob(const ActionDistribution& dist, const Eigen::VectorXd& action) {
  if (dist.kind == HeadKind::Categorical) {
    const int a = action_index(action, static_cast<int>(dist.probs.size()));
    return std::log(dist.probs(a));
  }
  if (action.size() != dist.mean.size()) throw std::invalid_argument("gaussian: action dimension mismatch");
  const Eigen::ArrayXd z = (action - dist.mean).array() * (-dist.log_std.array()).exp();
  return -0.5 * z.square().sum() - dist.log_std.sum() -
         static_cast<double>(dist.mean.size()) * half_log_two_pi();
}

double log_prob(const MlpParams& params, const Eigen::VectorXd& observation, const Eigen::VectorXd& action) {
  if (params.head == HeadKind::Categorical) {
    const Eigen::VectorXd logits = mlp_output(params, observation.transpose()).row(0).transpose();
    return log_softmax(logits)(action_index(action, params.out_dim));
  }
  return log_prob(policy_forward(params, observation), action);
}

Eigen::VectorXd sample(const ActionDistribution& dist, std::mt19937_64& rng) {
  if (dist.kind == HeadKind::Categorical) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    Eigen::Index pick = dist.probs.size() - 1;
    for (Eigen::Index i = 0; i < dist.probs.size(); ++i) {
      acc += dist.probs(i);
      if (u < acc) {
        pick = i;
        break;
      }
    }
    return Eigen::VectorXd::Constant(1, static_cast<double>(pick));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd a(dist.mean.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = dist.mean(i) + std::exp(dist.log_std(i)) * normal(rng);
  return a;
}

Eigen::VectorXd sample(const MlpParams& params, const Eigen::VectorXd& observation, std::mt19937_64& rng) {
  return sample(policy_forward(params, observation), rng);
}

Eigen::VectorXd mode(const MlpParams& params, const Eigen::VectorXd& observation) {
  const Eigen::VectorXd out = mlp_output(params, observation.transpose()).row(0).transpose();
  if (params.head == HeadKind::Categorical) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < out.size(); ++i) {
      if (out(i) > out(best)) best = i;
    }
    return Eigen::VectorXd::Constant(1, static_cast<double>(best));
  }
  if (params.head == HeadKind::Gaussian) return out;
  throw std::invalid_argument("mode: value network has no action distribution");
}

Eigen::VectorXd log_prob_batch(const MlpParams& params, const Eigen::MatrixXd& observations,
                               const Eigen::MatrixXd& actions) {
  if (actions.rows() != observations.rows()) throw std::invalid_argument("log_prob_batch: row count mismatch");
  const Eigen::MatrixXd out = mlp_output(params, observations);
  Eigen::VectorXd lp(observations.rows());
  if (params.head == HeadKind::Categorical) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      lp(i) = log_softmax(out.row(i).transpose())(action_index(actions.row(i).transpose(), params.out_dim));
    }
    return lp;
  }
  if (params.head != HeadKind::Gaussian) throw std::invalid_argument("log_prob_batch: value network");
  if (actions.cols() != params.out_dim) throw std::invalid_argument("log_prob_batch: action width mismatch");
  const Eigen::RowVectorXd inv_std = (-params.log_std().row(0).array()).exp();
  const double norm = params.log_std().sum() + params.out_dim * half_log_two_pi();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    lp(i) = -0.5 * ((actions.row(i) - out.row(i)).array() * inv_std.array()).square().sum() - norm;
  }
  return lp;
}

std::vector<ad::Var> bind(ad::Tape& tape, const MlpParams& params) {
  std::vector<ad::Var> vars;
  vars.reserve(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    vars.push_back(tape.parameter(params.tensors[i].value, static_cast<int>(i)));
  }
  return vars;
}

ad::Var mlp_graph(ad::Tape& tape, const MlpParams& params, const std::vector<ad::Var>& vars,
                  const Eigen::MatrixXd& observations) {
  check_dims(params, observations);
  if (vars.size() != params.tensors.size()) throw std::invalid_argument("mlp_graph: parameters not bound");
  ad::Var h = tape.constant(observations);
  for (int l = 0; l < params.n_layers(); ++l) {
    h = tape.affine(h, vars[2 * l], vars[2 * l + 1]);
    if (l + 1 < params.n_layers()) h = tape.tanh(h);
  }
  return h;
}

ad::Var log_prob_graph(ad::Tape& tape, const MlpParams& params, const std::vector<ad::Var>& vars,
                       const Eigen::MatrixXd& observations, const Eigen::MatrixXd& actions) {
  if (actions.rows() != observations.rows()) throw std::invalid_argument("log_prob_graph: row count mismatch");
  const ad::Var out = mlp_graph(tape, params, vars, observations);
  const Eigen::Index n = observations.rows();

  if (params.head == HeadKind::Categorical) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      idx[static_cast<std::size_t>(i)] = action_index(actions.row(i).transpose(), params.out_dim);
    }
    // The row max is a constant shift: log-softmax is invariant to it.
    const Eigen::VectorXd row_max = out.value().rowwise().maxCoeff();
    const ad::Var shifted = out - tape.constant(row_max.replicate(1, params.out_dim));
    const ad::Var lse = tape.log(tape.row_sum(tape.exp(shifted)));
    return tape.pick(shifted, std::move(idx)) - lse;
  }
  if (params.head != HeadKind::Gaussian) throw std::invalid_argument("log_prob_graph: value network");
  if (actions.cols() != params.out_dim) throw std::invalid_argument("log_prob_graph: action width mismatch");

  const ad::Var log_std = vars.back();
  const ad::Var inv_std = tape.broadcast_rows(tape.exp(-log_std), n);
  const ad::Var z = (tape.constant(actions) - out) * inv_std;
  const ad::Var log_norm = tape.broadcast_rows(tape.row_sum(log_std), n);
  return (-0.5 * tape.row_sum(tape.square(z)) - log_norm) - params.out_dim * half_log_two_pi();
}

Gradients backward(const MlpParams& params, const ad::Tape& tape, ad::Var loss) {
  ad::SlotGradients slots = tape.backward(loss);
  Gradients grads(params.tensors.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& shape = params.tensors[i].value;
    if (i < slots.size() && slots[i].size() != 0) {
      grads[i] = std::move(slots[i]);
    } else {
      grads[i] = Eigen::MatrixXd::Zero(shape.rows(), shape.cols());
    }
  }
  return grads;
}

double global_norm(const Gradients& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

Gradients clip_global_norm(Gradients grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return grads;
}

AdamState adam_init(const MlpParams& params) {
  AdamState s;
  for (const auto& t : params.tensors) {
    s.m.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
    s.v.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
  }
  return s;
}

void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, double lr, const AdamConfig& config) {
  const std::size_t n = params.tensors.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw std::invalid_argument("adam_step: tensor count mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = params.tensors[i].value;
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols() || state.m[i].rows() != p.rows() ||
        state.m[i].cols() != p.cols()) {
      throw std::invalid_argument("adam_step: shape mismatch for " + params.tensors[i].name);
    }
    if (!grads[i].allFinite()) {
      throw NonFiniteGradientError("adam_step: non-finite gradient for " + params.tensors[i].name);
    }
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i].cwiseAbs2();
    params.tensors[i].value.array() -=
        lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + config.eps);
  }
}

Eigen::VectorXd flatten(const MlpParams& params) {
  Eigen::VectorXd flat(params.n_parameters());
  Eigen::Index k = 0;
  for (const auto& t : params.tensors) {
    flat.segment(k, t.value.size()) = t.value.reshaped();
    k += t.value.size();
  }
  return flat;
}

void unflatten(MlpParams& params, const Eigen::VectorXd& flat) {
  if (flat.size() != params.n_parameters()) throw std::invalid_argument("unflatten: length mismatch");
  Eigen::Index k = 0;
  for (auto& t : params.tensors) {
    t.value.reshaped() = flat.segment(k, t.value.size());
    k += t.value.size();
  }
}

Eigen::VectorXd flatten(const Gradients& grads) {
  Eigen::Index total = 0;
  for (const auto& g : grads) total += g.size();
  Eigen::VectorXd flat(total);
  Eigen::Index k = 0;
  for (const auto& g : grads) {
    flat.segment(k, g.size()) = g.reshaped();
    k += g.size();
  }
  return flat;
}

}  // namespace apo
