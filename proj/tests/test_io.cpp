#include "support.hpp"

#include "apo/commands.hpp"
#include "apo/format.hpp"
#include "apo/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <sstream>

using namespace apo;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("MDP files round-trip exactly") {
  std::mt19937_64 rng(0);
  for (int k = 0; k < 10; ++k) {
    const Mdp mdp = random_ergodic_mdp(rng, 2 + k, 1 + k % 3, -3.0, 7.0);
    const Mdp back = parse_mdp_json(mdp_to_json(mdp));
    CHECK(back.n_states == mdp.n_states);
    CHECK(back.n_actions == mdp.n_actions);
    CHECK(back.transition == mdp.transition);
    CHECK(back.reward == mdp.reward);
    CHECK(back.init_dist == mdp.init_dist);
  }
  const auto path = temp_file("apo_test_mdp.json");
  write_mdp_file(path, make_two_loop());
  CHECK(read_mdp_file(path).transition == make_two_loop().transition);
  std::filesystem::remove(path);
}

TEST_CASE("policy files round-trip exactly") {
  std::mt19937_64 rng(1);
  const TabularPolicy pi = random_policy(rng, 4, 3);
  CHECK(parse_policy_json(policy_to_json(pi)).probs == pi.probs);
}

TEST_CASE("syntax errors report the line") {
  const std::string text = "{\n  \"n_states\": 2,\n  \"n_actions\": 2,\n  \"reward\": [[0, 0],, [1, 1]]\n}\n";
  try {
    parse_mdp_json(text, "bad.json");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).rfind("bad.json:4:", 0) == 0);
  }
}

TEST_CASE("semantic errors name the key and its line") {
  const std::string text =
      "{\n"
      "  \"n_states\": 2,\n"
      "  \"n_actions\": 2,\n"
      "  \"transition\": [[[1, 0], [0, 1]], [[0, 1], [1, 0]]],\n"
      "  \"reward\": [[0, 0], [1, \"one\"]],\n"
      "  \"init_dist\": [0.5, 0.5]\n"
      "}\n";
  try {
    parse_mdp_json(text, "m.json");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.key() == "reward[1][1]");
    CHECK(e.line() == 5);
    CHECK(std::string(e.what()).find("reward[1][1]") != std::string::npos);
  }
}

TEST_CASE("shape, missing and unknown keys are rejected") {
  const std::string short_row =
      R"({"n_states": 2, "n_actions": 1, "transition": [[[1, 0]], [[0]]], "reward": [[0], [1]], "init_dist": [1, 0]})";
  CHECK_THROWS_WITH_AS(parse_mdp_json(short_row), doctest::Contains("transition[1][0]"), ParseError);
  CHECK_THROWS_WITH_AS(parse_mdp_json(R"({"n_states": 2})"), doctest::Contains("n_actions"), ParseError);
  CHECK_THROWS_WITH_AS(parse_policy_json(R"({"probs": [[1]], "extra": 1})"), doctest::Contains("extra"), ParseError);
  CHECK_THROWS_AS(parse_mdp_json("[1, 2]"), ParseError);
  CHECK_THROWS_WITH_AS(parse_policy_json(R"({"probs": [[0.5, 0.5], [1]]})"), doctest::Contains("probs[1]"),
                       ParseError);
}

TEST_CASE("missing files raise FileError") {
  CHECK_THROWS_AS(read_mdp_file("/nonexistent/dir/mdp.json"), FileError);
}

TEST_CASE("train configs: defaults, overrides and validation") {
  const TrainConfig d = parse_train_config_json("{}");
  CHECK(d.alpha == 0.1);
  CHECK(d.rollout_length == 2048);
  CHECK(d.hidden == kDefaultHidden);

  const TrainConfig c = parse_train_config_json(
      R"({"algo": "ppo", "gamma": 0.9, "hidden": [16, 8], "seed": 12, "train_policy": false, "nu": 0})");
  CHECK(c.algo == Algo::PPO);
  CHECK(c.gamma == 0.9);
  CHECK(c.hidden == std::vector<int>{16, 8});
  CHECK(c.seed == 12);
  CHECK_FALSE(c.train_policy);
  CHECK(c.nu == 0.0);

  const TrainConfig back = parse_train_config_json(train_config_to_json(c));
  CHECK(back.algo == c.algo);
  CHECK(back.gamma == c.gamma);
  CHECK(back.hidden == c.hidden);
  CHECK(back.beta == c.beta);

  CHECK_THROWS_WITH_AS(parse_train_config_json(R"({"alpah": 0.1})"), doctest::Contains("alpah"), ParseError);
  CHECK_THROWS_WITH_AS(parse_train_config_json(R"({"iterations": 1.5})"), doctest::Contains("iterations"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse_train_config_json(R"({"lambda": 2})"), doctest::Contains("lambda"), ParseError);
  CHECK_THROWS_WITH_AS(parse_train_config_json(R"({"algo": "sac"})"), doctest::Contains("algo"), ParseError);
}

TEST_CASE("analysis report carries the exact quantities") {
  const PolicyAnalysis pa = analyze_policy(make_two_state(), two_state_policy(1.0, 1.0), 1.0);
  const auto j = nlohmann::json::parse(analysis_report_json(pa));
  CHECK(j.at("kemeny").get<double>() == doctest::Approx(1.5));
  CHECK(j.at("eta_avg").get<double>() == doctest::Approx(0.5));
  CHECK(j.contains("residuals"));
}

TEST_CASE("format_number prints the shortest round-trip form") {
  CHECK(format_number(0.03) == "0.03");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(-2.5e-12) == "-2.5e-12");
  CHECK(std::stod(format_number(0.1 + 0.2)) == 0.1 + 0.2);
}

TEST_CASE("seed list parsing") {
  CHECK(parse_seed_list("3") == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(parse_seed_list("4,9,2") == std::vector<std::uint64_t>{4, 9, 2});
  CHECK_THROWS(parse_seed_list("1,1"));
  CHECK_THROWS(parse_seed_list("a"));
  CHECK_THROWS(parse_seed_list("0"));
  CHECK_THROWS(parse_seed("-1"));
  CHECK(parse_double_list("0,0.5,1") == std::vector<double>{0.0, 0.5, 1.0});
  CHECK_THROWS(parse_double_list("0,,1"));
}

TEST_CASE("verify sweep rows and CSV") {
  const std::vector<VerifyRow> rows = verify_sweep({0, 1}, 4, 2, {0.9, 1.0});
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK_FALSE(r.violation());
  const VerifySummary s = summarize(rows);
  CHECK(s.rows == 4);
  CHECK(s.violations == 0);
  std::ostringstream os;
  write_verify_csv(os, rows);
  int lines = 0;
  std::istringstream in(os.str());
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 5);
}

TEST_CASE("analyze command writes a JSON report and rejects reducible input") {
  const auto dir = std::filesystem::temp_directory_path() / "apo_test_cmd";
  std::filesystem::create_directories(dir);
  write_mdp_file(dir / "m.json", make_two_state());
  write_text_file(dir / "swap.json", policy_to_json(two_state_policy(1.0, 1.0)));
  write_text_file(dir / "stay.json", policy_to_json(two_state_policy(0.0, 0.0)));
  std::ostringstream out, err;
  CHECK(cmd_analyze(dir / "m.json", dir / "swap.json", 1.0, dir / "r.json", out, err) == kExitOk);
  CHECK(nlohmann::json::parse(read_text_file(dir / "r.json")).at("kemeny").get<double>() == doctest::Approx(1.5));
  std::ostringstream out2, err2;
  CHECK(cmd_analyze(dir / "m.json", dir / "stay.json", 1.0, dir / "r2.json", out2, err2) == kExitInvalid);
  const auto report = nlohmann::json::parse(read_text_file(dir / "r2.json"));
  CHECK(report.at("error") == "not_ergodic");
  CHECK(report.at("unreachable").at("from") == 0);
  std::ostringstream out3, err3;
  CHECK(cmd_analyze(dir / "m.json", dir / "swap.json", 1.5, dir / "r3.json", out3, err3) == kExitInvalid);
  std::filesystem::remove_all(dir);
}
