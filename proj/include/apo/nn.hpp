#pragma once

#include "apo/autodiff.hpp"

#include <Eigen/Dense>

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace apo {

/// Raised by the optimizer when a gradient entry is NaN or infinite.
class NonFiniteGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HeadKind { Value, Categorical, Gaussian };

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

using Gradients = std::vector<Eigen::MatrixXd>;

/**
 * Fully connected tanh network. Tensors are stored in order
 * l0.weight, l0.bias, ..., lK.weight, lK.bias and, for a Gaussian head,
 * a trailing 1 x out_dim log_std. Weights are fan_in x fan_out and biases
 * 1 x fan_out, so a batch of row observations maps as X W + e b.
 */
struct MlpParams {
  HeadKind head = HeadKind::Value;
  int in_dim = 0;
  int out_dim = 0;
  std::vector<int> hidden;
  std::vector<NamedTensor> tensors;

  [[nodiscard]] int n_layers() const { return static_cast<int>(hidden.size()) + 1; }
  [[nodiscard]] const Eigen::MatrixXd& weight(int layer) const { return tensors[2 * layer].value; }
  [[nodiscard]] const Eigen::MatrixXd& bias(int layer) const { return tensors[2 * layer + 1].value; }
  [[nodiscard]] Eigen::MatrixXd& weight(int layer) { return tensors[2 * layer].value; }
  [[nodiscard]] Eigen::MatrixXd& bias(int layer) { return tensors[2 * layer + 1].value; }
  [[nodiscard]] bool has_log_std() const { return head == HeadKind::Gaussian; }
  [[nodiscard]] const Eigen::MatrixXd& log_std() const { return tensors.back().value; }
  [[nodiscard]] Eigen::Index n_parameters() const;
  [[nodiscard]] bool all_finite() const;
};

inline const std::vector<int> kDefaultHidden{64, 64};

/// Glorot-uniform weights, zero biases, zero log_std.
MlpParams init_mlp(std::mt19937_64& rng, int in_dim, int out_dim, HeadKind head,
                   const std::vector<int>& hidden = kDefaultHidden);

/// Raw network output for a batch of row observations (n x out_dim).
Eigen::MatrixXd mlp_output(const MlpParams& params, const Eigen::MatrixXd& observations);

/// V(s) for each row of `observations`.
Eigen::VectorXd value_forward(const MlpParams& params, const Eigen::MatrixXd& observations);

struct ActionDistribution {
  HeadKind kind = HeadKind::Categorical;
  Eigen::VectorXd probs;    // categorical
  Eigen::VectorXd mean;     // Gaussian
  Eigen::VectorXd log_std;  // Gaussian
};

ActionDistribution policy_forward(const MlpParams& params, const Eigen::VectorXd& observation);

/// Discrete actions are a length-1 vector holding the index.
double log_prob(const MlpParams& params, const Eigen::VectorXd& observation, const Eigen::VectorXd& action);
double log_prob(const ActionDistribution& dist, const Eigen::VectorXd& action);
Eigen::VectorXd sample(const MlpParams& params, const Eigen::VectorXd& observation, std::mt19937_64& rng);
Eigen::VectorXd sample(const ActionDistribution& dist, std::mt19937_64& rng);
/// Categorical argmax (lowest index on ties) or Gaussian mean.
Eigen::VectorXd mode(const MlpParams& params, const Eigen::VectorXd& observation);

/// Log densities for a batch; `actions` holds one action per row.
Eigen::VectorXd log_prob_batch(const MlpParams& params, const Eigen::MatrixXd& observations,
                               const Eigen::MatrixXd& actions);

/// Puts every tensor on the tape as a parameter whose slot is its index.
std::vector<ad::Var> bind(ad::Tape& tape, const MlpParams& params);

/// Network output as a tape node (n x out_dim).
ad::Var mlp_graph(ad::Tape& tape, const MlpParams& params, const std::vector<ad::Var>& vars,
                  const Eigen::MatrixXd& observations);

/// Per-row log density as a tape node (n x 1).
ad::Var log_prob_graph(ad::Tape& tape, const MlpParams& params, const std::vector<ad::Var>& vars,
                       const Eigen::MatrixXd& observations, const Eigen::MatrixXd& actions);

/// Gradients of the 1x1 `loss` for every tensor of `params`; untouched tensors get zeros.
Gradients backward(const MlpParams& params, const ad::Tape& tape, ad::Var loss);

double global_norm(const Gradients& grads);
/// Rescales the whole gradient when its 2-norm exceeds max_norm.
Gradients clip_global_norm(Gradients grads, double max_norm);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long step = 0;
};

AdamState adam_init(const MlpParams& params);

/// One bias-corrected Adam update in place. Throws NonFiniteGradientError
/// before touching any state if a gradient entry is not finite.
void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, double lr,
               const AdamConfig& config = {});

/// Flat parameter vector in tensor order, and its inverse.
Eigen::VectorXd flatten(const MlpParams& params);
void unflatten(MlpParams& params, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten(const Gradients& grads);

}  // namespace apo
