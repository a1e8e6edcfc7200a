#include "apo/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace apo {

using nlohmann::json;

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Line of the first occurrence of "key" in the text, or 0.
std::size_t line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find('"' + key + '"');
  return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

class Reader {
 public:
  Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {
    try {
      root_ = json::parse(text);
    } catch (const json::parse_error& e) {
      const std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
      throw ParseError(source_, line_of_offset(text, byte), "", e.what());
    }
    if (!root_.is_object()) throw ParseError(source_, 1, "", "top-level value must be an object");
  }

  [[nodiscard]] const json& root() const { return root_; }

  [[noreturn]] void fail(const std::string& top_key, const std::string& path, const std::string& detail) const {
    throw ParseError(source_, line_of_key(text_, top_key), path, detail);
  }

  const json& require(const std::string& key) const {
    const auto it = root_.find(key);
    if (it == root_.end()) fail(key, key, "missing required key");
    return *it;
  }

  void reject_unknown(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : root_.items()) {
      if (!allowed.contains(key)) fail(key, key, "unknown key");
    }
  }

  int integer(const std::string& key, const json& j, const std::string& path) const {
    if (!j.is_number_integer()) fail(key, path, "expected an integer");
    return j.get<int>();
  }

  double number(const std::string& key, const json& j, const std::string& path) const {
    if (!j.is_number()) fail(key, path, "expected a number");
    return j.get<double>();
  }

  const json& array(const std::string& key, const json& j, const std::string& path, std::size_t size) const {
    if (!j.is_array()) fail(key, path, "expected an array");
    if (j.size() != size) {
      fail(key, path, "expected " + std::to_string(size) + " entries, found " + std::to_string(j.size()));
    }
    return j;
  }

 private:
  const std::string& text_;
  std::string source_;
  json root_;
};

std::string index_path(const std::string& base, std::initializer_list<std::size_t> idx) {
  std::string out = base;
  for (std::size_t i : idx) out += "[" + std::to_string(i) + "]";
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, std::string key, const std::string& detail)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         (key.empty() ? std::string() : "key '" + key + "': ") + detail),
      line_(line),
      key_(std::move(key)) {}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FileError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw FileError("write to " + path.string() + " failed");
}

Mdp parse_mdp_json(const std::string& text, const std::string& source) {
  const Reader r(text, source);
  r.reject_unknown({"n_states", "n_actions", "transition", "reward", "init_dist"});
  const int n_states = r.integer("n_states", r.require("n_states"), "n_states");
  const int n_actions = r.integer("n_actions", r.require("n_actions"), "n_actions");
  if (n_states <= 0) r.fail("n_states", "n_states", "must be positive");
  if (n_actions <= 0) r.fail("n_actions", "n_actions", "must be positive");
  const auto ns = static_cast<std::size_t>(n_states);
  const auto na = static_cast<std::size_t>(n_actions);

  Mdp mdp(n_states, n_actions);
  const json& trans = r.array("transition", r.require("transition"), "transition", ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const json& per_action = r.array("transition", trans[s], index_path("transition", {s}), na);
    for (std::size_t a = 0; a < na; ++a) {
      const json& row = r.array("transition", per_action[a], index_path("transition", {s, a}), ns);
      for (std::size_t t = 0; t < ns; ++t) {
        mdp.p(static_cast<int>(s), static_cast<int>(a), static_cast<int>(t)) =
            r.number("transition", row[t], index_path("transition", {s, a, t}));
      }
    }
  }
  const json& reward = r.array("reward", r.require("reward"), "reward", ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const json& row = r.array("reward", reward[s], index_path("reward", {s}), na);
    for (std::size_t a = 0; a < na; ++a) {
      mdp.reward(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
          r.number("reward", row[a], index_path("reward", {s, a}));
    }
  }
  const json& init = r.array("init_dist", r.require("init_dist"), "init_dist", ns);
  for (std::size_t s = 0; s < ns; ++s) {
    mdp.init_dist(static_cast<Eigen::Index>(s)) = r.number("init_dist", init[s], index_path("init_dist", {s}));
  }
  return mdp;
}

std::string mdp_to_json(const Mdp& mdp) {
  json j;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  json trans = json::array();
  for (int s = 0; s < mdp.n_states; ++s) {
    json per_action = json::array();
    for (int a = 0; a < mdp.n_actions; ++a) per_action.push_back(vector_json(mdp.row(s, a).transpose()));
    trans.push_back(std::move(per_action));
  }
  j["transition"] = std::move(trans);
  j["reward"] = matrix_json(mdp.reward);
  j["init_dist"] = vector_json(mdp.init_dist);
  return j.dump(2) + "\n";
}

Mdp read_mdp_file(const std::filesystem::path& path) { return parse_mdp_json(read_text_file(path), path.string()); }

void write_mdp_file(const std::filesystem::path& path, const Mdp& mdp) { write_text_file(path, mdp_to_json(mdp)); }

TabularPolicy parse_policy_json(const std::string& text, const std::string& source) {
  const Reader r(text, source);
  r.reject_unknown({"probs"});
  const json& probs = r.require("probs");
  if (!probs.is_array() || probs.empty()) r.fail("probs", "probs", "expected a non-empty array of rows");
  const std::size_t ns = probs.size();
  if (!probs[0].is_array() || probs[0].empty()) r.fail("probs", "probs[0]", "expected a non-empty array");
  const std::size_t na = probs[0].size();
  TabularPolicy policy;
  policy.probs.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
  for (std::size_t s = 0; s < ns; ++s) {
    const json& row = r.array("probs", probs[s], index_path("probs", {s}), na);
    for (std::size_t a = 0; a < na; ++a) {
      policy.probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
          r.number("probs", row[a], index_path("probs", {s, a}));
    }
  }
  return policy;
}

std::string policy_to_json(const TabularPolicy& policy) {
  json j;
  j["probs"] = matrix_json(policy.probs);
  return j.dump(2) + "\n";
}

TabularPolicy read_policy_file(const std::filesystem::path& path) {
  return parse_policy_json(read_text_file(path), path.string());
}

TrainConfig parse_train_config_json(const std::string& text, const std::string& source) {
  const Reader r(text, source);
  r.reject_unknown({"algo", "alpha", "beta", "lambda", "nu", "clip_eps", "iterations", "rollout_length", "epochs",
                    "minibatch", "gamma", "seed", "max_grad_norm", "hidden", "eval_interval", "eval_horizon",
                    "eval_episodes", "train_policy"});
  TrainConfig c;
  const json& root = r.root();
  auto num = [&](const char* key, double& out) {
    if (root.contains(key)) out = r.number(key, root.at(key), key);
  };
  auto integer = [&](const char* key, int& out) {
    if (root.contains(key)) out = r.integer(key, root.at(key), key);
  };
  if (root.contains("algo")) {
    const json& a = root.at("algo");
    if (!a.is_string()) r.fail("algo", "algo", "expected \"APO\" or \"PPO\"");
    try {
      c.algo = parse_algo(a.get<std::string>());
    } catch (const std::invalid_argument& e) {
      r.fail("algo", "algo", e.what());
    }
  }
  num("alpha", c.alpha);
  num("beta", c.beta);
  num("lambda", c.lambda);
  num("nu", c.nu);
  num("clip_eps", c.clip_eps);
  integer("iterations", c.iterations);
  integer("rollout_length", c.rollout_length);
  integer("epochs", c.epochs);
  integer("minibatch", c.minibatch);
  num("gamma", c.gamma);
  if (root.contains("seed")) {
    const json& s = root.at("seed");
    if (!s.is_number_unsigned()) r.fail("seed", "seed", "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  num("max_grad_norm", c.max_grad_norm);
  if (root.contains("hidden")) {
    const json& h = root.at("hidden");
    if (!h.is_array()) r.fail("hidden", "hidden", "expected an array of layer sizes");
    c.hidden.clear();
    for (std::size_t i = 0; i < h.size(); ++i) c.hidden.push_back(r.integer("hidden", h[i], index_path("hidden", {i})));
  }
  integer("eval_interval", c.eval_interval);
  integer("eval_horizon", c.eval_horizon);
  integer("eval_episodes", c.eval_episodes);
  if (root.contains("train_policy")) {
    const json& t = root.at("train_policy");
    if (!t.is_boolean()) r.fail("train_policy", "train_policy", "expected true or false");
    c.train_policy = t.get<bool>();
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(source, 0, "", e.what());
  }
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["algo"] = to_string(c.algo);
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["lambda"] = c.lambda;
  j["nu"] = c.nu;
  j["clip_eps"] = c.clip_eps;
  j["iterations"] = c.iterations;
  j["rollout_length"] = c.rollout_length;
  j["epochs"] = c.epochs;
  j["minibatch"] = c.minibatch;
  j["gamma"] = c.gamma;
  j["seed"] = c.seed;
  j["max_grad_norm"] = c.max_grad_norm;
  j["hidden"] = c.hidden;
  j["eval_interval"] = c.eval_interval;
  j["eval_horizon"] = c.eval_horizon;
  j["eval_episodes"] = c.eval_episodes;
  j["train_policy"] = c.train_policy;
  return j.dump(2) + "\n";
}

TrainConfig read_train_config_file(const std::filesystem::path& path) {
  return parse_train_config_json(read_text_file(path), path.string());
}

std::string analysis_report_json(const PolicyAnalysis& a) {
  json j;
  j["gamma"] = a.gamma;
  j["eta_avg"] = a.eta_avg;
  j["eta_disc"] = a.eta_disc;
  j["kemeny"] = a.kemeny;
  j["poisson_shift"] = a.poisson_shift;
  j["d_stat"] = vector_json(a.d_stat.probs());
  j["d_disc"] = vector_json(a.d_disc.probs());
  j["v"] = vector_json(a.v);
  j["q"] = matrix_json(a.q);
  j["adv"] = matrix_json(a.adv);
  j["z"] = matrix_json(a.z);
  j["m"] = matrix_json(a.m);
  const AnalysisResiduals& r = a.residuals;
  j["residuals"] = {
      {"stationary", r.stationary},
      {"zero_mean", r.zero_mean},
      {"z_row_sums", r.z_row_sums},
      {"z_left_fixed", r.z_left_fixed},
      {"z_poisson", r.z_poisson},
      {"m_bellman", r.m_bellman},
      {"m_diagonal", r.m_diagonal},
      {"kemeny_row_spread", r.kemeny_row_spread},
      {"kemeny_trace_gap", r.kemeny_trace_gap},
  };
  return j.dump(2) + "\n";
}

}  // namespace apo
