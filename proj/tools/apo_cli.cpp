#include "apo/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Average-reward policy optimization: exact analysis, bound verification and training"};
  app.require_subcommand(1);

  std::string mdp_path;
  std::string policy_path;
  double gamma = 1.0;
  std::string gammas = "0.9,0.99,0.999,1.0";
  std::string env_name = "twoloop";
  std::string algo_name;
  std::string config_path;
  std::string seed_text;
  std::string seeds_text = "5";
  std::string nus = "0,0.03,0.1,0.3,1.0";
  std::string out_path;
  int n_states = 5;
  int n_actions = 3;

  CLI::App* analyze = app.add_subcommand("analyze", "Exact analysis of one policy on a tabular MDP");
  analyze->add_option("--mdp", mdp_path, "MDP file (JSON)")->required()->check(CLI::ExistingFile);
  analyze->add_option("--policy", policy_path, "Policy file (JSON)")->required()->check(CLI::ExistingFile);
  analyze->add_option("--gamma", gamma, "Discount in (0, 1]; 1 is the average criterion")->capture_default_str();
  analyze->add_option("--out", out_path, "Report file (JSON)")->required();

  CLI::App* verify = app.add_subcommand("verify", "Check the trust-region bounds on random ergodic MDPs");
  verify->add_option("--seeds", seeds_text, "Seed count n (seeds 0..n-1) or a comma list")->capture_default_str();
  verify->add_option("--states", n_states, "States per MDP")->capture_default_str();
  verify->add_option("--actions", n_actions, "Actions per MDP")->capture_default_str();
  verify->add_option("--gammas", gammas, "Comma-separated discounts in (0, 1]")->capture_default_str();
  verify->add_option("--out", out_path, "Output CSV")->required();

  CLI::App* train = app.add_subcommand("train", "Train APO or the discounted PPO baseline");
  train->add_option("--env", env_name, "twostate | twoloop | pendulum | file:<path>")->capture_default_str();
  train->add_option("--algo", algo_name, "APO or PPO (overrides the config)");
  train->add_option("--config", config_path, "Training config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--seed", seed_text, "Master seed (overrides the config)");
  train->add_option("--out", out_path, "Training log CSV; the checkpoint goes to <out>.ckpt")->required();

  CLI::App* ablate = app.add_subcommand("ablate-nu", "Sweep the average value constraint coefficient");
  ablate->add_option("--env", env_name, "twostate | twoloop | pendulum | file:<path>")->capture_default_str();
  ablate->add_option("--nus", nus, "Comma-separated nu values")->capture_default_str();
  ablate->add_option("--config", config_path, "Training config (JSON)")->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds_text, "Seed count n (seeds 0..n-1) or a comma list")->capture_default_str();
  ablate->add_option("--out", out_path, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? apo::kExitOk : apo::kExitInvalid;
  }

  try {
    const std::optional<std::filesystem::path> config =
        config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path);
    if (*analyze) return apo::cmd_analyze(mdp_path, policy_path, gamma, out_path, std::cout, std::cerr);
    if (*verify) {
      return apo::cmd_verify(apo::parse_seed_list(seeds_text), n_states, n_actions, apo::parse_double_list(gammas),
                             out_path, std::cout, std::cerr);
    }
    if (*train) {
      std::optional<apo::Algo> algo;
      if (!algo_name.empty()) algo = apo::parse_algo(algo_name);
      std::optional<std::uint64_t> seed;
      if (!seed_text.empty()) seed = apo::parse_seed(seed_text);
      return apo::cmd_train(env_name, algo, config, seed, out_path, std::cout, std::cerr);
    }
    if (*ablate) {
      return apo::cmd_ablate_nu(env_name, apo::parse_double_list(nus), config, apo::parse_seed_list(seeds_text),
                                out_path, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "apo: " << e.what() << '\n';
    return apo::kExitInvalid;
  }
  return apo::kExitInvalid;
}
