#include "apo/commands.hpp"

#include "apo/checkpoint.hpp"
#include "apo/format.hpp"
#include "apo/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace apo {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FileError("cannot open " + path.string() + " for writing");
  return os;
}

void write_error_report(const std::filesystem::path& path, const std::string& kind, const std::string& message,
                        const std::optional<std::pair<int, int>>& pair) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  if (pair) j["unreachable"] = {{"from", pair->first}, {"to", pair->second}};
  write_text_file(path, j.dump(2) + "\n");
}

const char* flag(bool b) { return b ? "true" : "false"; }

TrainConfig load_config(const std::optional<std::filesystem::path>& path) {
  return path ? read_train_config_file(*path) : TrainConfig{};
}

}  // namespace

std::vector<VerifyRow> verify_sweep(const std::vector<std::uint64_t>& seeds, int n_states, int n_actions,
                                    const std::vector<double>& gammas) {
  std::vector<VerifyRow> rows;
  rows.reserve(seeds.size() * gammas.size());
  for (std::uint64_t seed : seeds) {
    const SeedStreams streams = split_seed(seed);
    std::mt19937_64 mdp_rng(streams.env);
    std::mt19937_64 old_rng(streams.init);
    std::mt19937_64 new_rng(streams.sampling);
    const Mdp mdp = random_ergodic_mdp(mdp_rng, n_states, n_actions);
    const TabularPolicy pi_old = random_policy(old_rng, n_states, n_actions);
    const TabularPolicy pi_new = random_policy(new_rng, n_states, n_actions);
    for (double gamma : gammas) {
      VerifyRow row;
      row.mdp_seed = streams.env;
      row.policy_seed_old = streams.init;
      row.policy_seed_new = streams.sampling;
      row.bound = check_performance_bound(mdp, pi_old, pi_new, gamma);
      row.lemma3_residual = check_distribution_identity(mdp, pi_old, pi_new, gamma);
      rows.push_back(row);
    }
  }
  return rows;
}

VerifySummary summarize(const std::vector<VerifyRow>& rows) {
  VerifySummary s;
  s.rows = rows.size();
  for (const auto& r : rows) {
    if (r.violation()) ++s.violations;
    s.max_difference_residual = std::max(s.max_difference_residual, r.bound.difference_formula_residual);
    s.max_lemma3_residual = std::max(s.max_lemma3_residual, r.lemma3_residual);
    s.max_surrogate_route_gap = std::max(s.max_surrogate_route_gap, r.bound.surrogate_route_gap);
  }
  return s;
}

void write_verify_csv(std::ostream& os, const std::vector<VerifyRow>& rows) {
  os << "mdp_seed,policy_seed_old,policy_seed_new,gamma,actual_diff,surrogate,eps_gamma,xi_gamma,kemeny_new,"
        "exp_policy_tv,dist_tv,lower,upper,holds_lower,holds_upper,holds_prop1,holds_prop2,lemma3_residual\n";
  for (const auto& r : rows) {
    const BoundReport& b = r.bound;
    os << r.mdp_seed << ',' << r.policy_seed_old << ',' << r.policy_seed_new;
    for (double x : {b.gamma, b.actual_diff, b.surrogate, b.eps_gamma, b.xi_gamma, b.kemeny_new, b.exp_policy_tv,
                     b.dist_tv, b.lower, b.upper}) {
      os << ',' << format_number(x);
    }
    os << ',' << flag(b.holds_lower) << ',' << flag(b.holds_upper) << ',' << flag(b.holds_prop1) << ','
       << flag(b.holds_prop2) << ',' << format_number(r.lemma3_residual) << '\n';
  }
}

std::vector<TrainLog> train_many(const EnvFactory& factory, const std::vector<TrainConfig>& configs) {
  std::vector<TrainLog> logs(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        logs[i] = train(factory, configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(configs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return logs;
}

double mean_abs_b_tail(const TrainLog& log, std::size_t count) {
  if (log.rows.empty()) return 0.0;
  const std::size_t n = std::min(count, log.rows.size());
  double total = 0.0;
  for (std::size_t i = log.rows.size() - n; i < log.rows.size(); ++i) total += std::abs(log.rows[i].b);
  return total / static_cast<double>(n);
}

std::vector<AblationRow> ablate_nu(const EnvFactory& factory, const TrainConfig& base, const std::vector<double>& nus,
                                   const std::vector<std::uint64_t>& seeds) {
  if (nus.empty()) throw std::invalid_argument("ablate_nu: the nu list is empty");
  std::vector<TrainConfig> configs;
  for (double nu : nus) {
    for (std::uint64_t seed : seeds) {
      TrainConfig c = base;
      c.algo = Algo::APO;
      c.nu = nu;
      c.seed = seed;
      configs.push_back(c);
    }
  }
  const std::vector<TrainLog> logs = train_many(factory, configs);
  const std::size_t tail = std::max<std::size_t>(1, static_cast<std::size_t>(base.iterations) / 4);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    rows.push_back({configs[i].nu, configs[i].seed, logs[i].final_eval(), mean_abs_b_tail(logs[i], tail)});
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "nu,seed,final_eval_avg_reward,mean_abs_b_last_quarter\n";
  for (const auto& r : rows) {
    os << format_number(r.nu) << ',' << r.seed << ',' << format_number(r.final_eval) << ','
       << format_number(r.mean_abs_b_tail) << '\n';
  }
}

std::uint64_t parse_seed(const std::string& item) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(item, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != item.size() || item.front() == '-') throw std::invalid_argument("invalid seed '" + item + "'");
  return static_cast<std::uint64_t>(v);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (text.find(',') == std::string::npos) {
    const std::uint64_t n = parse_seed(text);
    for (std::uint64_t i = 0; i < n; ++i) seeds.push_back(i);
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(parse_seed(item));
  }
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("seed list contains duplicates");
  }
  if (seeds.empty()) throw std::invalid_argument("seed list is empty");
  return seeds;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v)) {
      throw std::invalid_argument("invalid number '" + item + "'");
    }
    values.push_back(v);
  }
  if (values.empty()) throw std::invalid_argument("number list is empty");
  return values;
}

int cmd_analyze(const std::filesystem::path& mdp_path, const std::filesystem::path& policy_path, double gamma,
                const std::filesystem::path& out_path, std::ostream& out, std::ostream& err) {
  try {
    const Mdp mdp = read_mdp_file(mdp_path);
    const TabularPolicy policy = read_policy_file(policy_path);
    const ValidationResult mv = validate_mdp(mdp);
    const ValidationResult pv = validate_policy(policy);
    if (!mv.ok() || !pv.ok()) {
      const Violation& v = mv.ok() ? pv.violations.front() : mv.violations.front();
      err << "analyze: " << (mv.ok() ? "policy" : "MDP") << " fails validation: " << v.kind << " at state "
          << v.state << ", action " << v.action << " (magnitude " << v.magnitude << ")\n";
      return kExitInvalid;
    }
    if (policy.probs.rows() != mdp.n_states || policy.probs.cols() != mdp.n_actions) {
      err << "analyze: policy shape does not match the MDP\n";
      return kExitInvalid;
    }
    const ErgodicityReport erg = is_ergodic(mdp, policy);
    if (!erg.ergodic) {
      const std::string msg = "induced chain is not irreducible";
      write_error_report(out_path, "not_ergodic", msg, erg.unreachable);
      err << "analyze: " << msg;
      if (erg.unreachable) err << " (state " << erg.unreachable->second << " unreachable from " << erg.unreachable->first << ")";
      err << '\n';
      return kExitInvalid;
    }
    const PolicyAnalysis pa = analyze_policy(mdp, policy, gamma);
    write_text_file(out_path, analysis_report_json(pa));
    out << std::setprecision(12) << "analyze: eta=" << pa.eta_avg << " kemeny=" << pa.kemeny << " -> "
        << out_path.string() << '\n';
    return kExitOk;
  } catch (const ParseError& e) {
    err << "analyze: parse error: " << e.what() << '\n';
  } catch (const NotErgodicError& e) {
    write_error_report(out_path, "not_ergodic", e.what(), std::nullopt);
    err << "analyze: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "analyze: " << e.what() << '\n';
  }
  return kExitInvalid;
}

int cmd_verify(const std::vector<std::uint64_t>& seeds, int n_states, int n_actions, const std::vector<double>& gammas,
               const std::filesystem::path& out_path, std::ostream& out, std::ostream& err) {
  if (n_states < 2 || n_states > kMaxVerifyStates || n_actions < 1) {
    err << "verify: need 2 <= states <= " << kMaxVerifyStates << " and actions >= 1\n";
    return kExitInvalid;
  }
  try {
    const std::vector<VerifyRow> rows = verify_sweep(seeds, n_states, n_actions, gammas);
    std::ofstream os = open_output(out_path);
    write_verify_csv(os, rows);
    const VerifySummary s = summarize(rows);
    out << std::setprecision(3) << "verify: rows=" << s.rows << " violations=" << s.violations
        << " max_difference_residual=" << s.max_difference_residual
        << " max_lemma3_residual=" << s.max_lemma3_residual << " max_surrogate_route_gap=" << s.max_surrogate_route_gap
        << '\n';
    return s.violations == 0 ? kExitOk : kExitViolation;
  } catch (const std::exception& e) {
    err << "verify: " << e.what() << '\n';
    return kExitInvalid;
  }
}

int cmd_train(const std::string& env_name, std::optional<Algo> algo,
              const std::optional<std::filesystem::path>& config_path, std::optional<std::uint64_t> seed,
              const std::filesystem::path& out_path, std::ostream& out, std::ostream& err) {
  try {
    TrainConfig config = load_config(config_path);
    if (algo) config.algo = *algo;
    if (seed) config.seed = *seed;
    config.validate();
    const EnvFactory factory = env_factory(env_name);
    const TrainLog log = train(factory, config);

    std::ofstream os = open_output(out_path);
    write_train_log_csv(os, log);

    const TrainerState& s = log.final_state;
    std::vector<NamedTensor> tensors = checkpoint_tensors("policy", s.policy, s.policy_opt);
    const std::vector<NamedTensor> value = checkpoint_tensors("value", s.value, s.value_opt);
    tensors.insert(tensors.end(), value.begin(), value.end());
    tensors.push_back({"trainer/eta_hat", Eigen::MatrixXd::Constant(1, 1, s.eta_hat)});
    tensors.push_back({"trainer/b", Eigen::MatrixXd::Constant(1, 1, s.b)});
    tensors.push_back({"trainer/env_steps", Eigen::MatrixXd::Constant(1, 1, static_cast<double>(s.env_steps))});
    std::filesystem::path ckpt = out_path;
    ckpt += ".ckpt";
    write_checkpoint(ckpt, tensors);

    out << std::setprecision(6) << "train: " << to_string(config.algo) << " on " << env_name << " seed "
        << config.seed << ": final eval avg reward " << log.final_eval() << ", eta_hat " << s.eta_hat << " -> "
        << out_path.string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << '\n';
    return kExitInvalid;
  }
}

int cmd_ablate_nu(const std::string& env_name, const std::vector<double>& nus,
                  const std::optional<std::filesystem::path>& config_path, const std::vector<std::uint64_t>& seeds,
                  const std::filesystem::path& out_path, std::ostream& out, std::ostream& err) {
  try {
    const TrainConfig base = load_config(config_path);
    for (double nu : nus) {
      if (!(nu >= 0.0)) throw std::invalid_argument("nu values must be non-negative");
    }
    const std::vector<AblationRow> rows = ablate_nu(env_factory(env_name), base, nus, seeds);
    std::ofstream os = open_output(out_path);
    write_ablation_csv(os, rows);
    out << "ablate-nu: " << rows.size() << " runs -> " << out_path.string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "ablate-nu: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace apo
