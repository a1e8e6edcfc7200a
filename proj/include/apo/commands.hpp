#pragma once

#include "apo/bounds.hpp"
#include "apo/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace apo {

/// Process exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitViolation = 2;

/// Largest state count `verify` accepts.
inline constexpr int kMaxVerifyStates = 64;

/// Thresholds a verify row must meet on top of the bound inequalities.
inline constexpr double kDifferenceFormulaTolerance = 1e-9;
inline constexpr double kDistributionIdentityTolerance = 1e-8;

struct VerifyRow {
  std::uint64_t mdp_seed = 0;
  std::uint64_t policy_seed_old = 0;
  std::uint64_t policy_seed_new = 0;
  BoundReport bound;
  double lemma3_residual = 0.0;

  [[nodiscard]] bool violation() const {
    return !bound.all_hold() || !(lemma3_residual <= kDistributionIdentityTolerance);
  }
};

struct VerifySummary {
  std::size_t rows = 0;
  std::size_t violations = 0;
  double max_difference_residual = 0.0;
  double max_lemma3_residual = 0.0;
  double max_surrogate_route_gap = 0.0;
};

/// One random ergodic MDP and policy pair per seed, checked at every gamma.
/// The three generator seeds are the env/init/sampling streams of split_seed(seed).
std::vector<VerifyRow> verify_sweep(const std::vector<std::uint64_t>& seeds, int n_states, int n_actions,
                                    const std::vector<double>& gammas);
VerifySummary summarize(const std::vector<VerifyRow>& rows);
void write_verify_csv(std::ostream& os, const std::vector<VerifyRow>& rows);

/// Runs independent trainers on all hardware threads; results keep input order.
std::vector<TrainLog> train_many(const EnvFactory& factory, const std::vector<TrainConfig>& configs);

/// Mean |b| over the last `count` iterations of a log (all of them if fewer).
double mean_abs_b_tail(const TrainLog& log, std::size_t count);

struct AblationRow {
  double nu = 0.0;
  std::uint64_t seed = 0;
  double final_eval = 0.0;
  double mean_abs_b_tail = 0.0;
};

std::vector<AblationRow> ablate_nu(const EnvFactory& factory, const TrainConfig& base, const std::vector<double>& nus,
                                   const std::vector<std::uint64_t>& seeds);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

std::uint64_t parse_seed(const std::string& text);
/// "a,b,c" -> {a, b, c}; a single integer n -> {0, ..., n-1}.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

// Command entry points. Each returns an exit code and reports problems on `err`.
int cmd_analyze(const std::filesystem::path& mdp_path, const std::filesystem::path& policy_path, double gamma,
                const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);
int cmd_verify(const std::vector<std::uint64_t>& seeds, int n_states, int n_actions, const std::vector<double>& gammas,
               const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);
int cmd_train(const std::string& env_name, std::optional<Algo> algo,
              const std::optional<std::filesystem::path>& config_path, std::optional<std::uint64_t> seed,
              const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);
int cmd_ablate_nu(const std::string& env_name, const std::vector<double>& nus,
                  const std::optional<std::filesystem::path>& config_path, const std::vector<std::uint64_t>& seeds,
                  const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);

}  // namespace apo
