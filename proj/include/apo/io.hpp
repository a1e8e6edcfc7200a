#pragma once

#include "apo/analysis.hpp"
#include "apo/mdp.hpp"
#include "apo/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace apo {

/// Malformed input file. `line` is 1-based and 0 when unknown; `key` names
/// the offending JSON path when the syntax was fine but a value was not.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, std::string key, const std::string& detail);

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] const std::string& key() const { return key_; }

 private:
  std::size_t line_;
  std::string key_;
};

class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/**
 * MDP files are JSON objects with keys n_states, n_actions, transition
 * ([s][a][s']), reward ([s][a]) and init_dist ([s]). Numbers are written in
 * shortest round-trip form, so write -> read reproduces every value exactly.
 * Parsing checks shapes only; probability checks are left to validate_mdp.
 */
Mdp parse_mdp_json(const std::string& text, const std::string& source = "<string>");
std::string mdp_to_json(const Mdp& mdp);
Mdp read_mdp_file(const std::filesystem::path& path);
void write_mdp_file(const std::filesystem::path& path, const Mdp& mdp);

/// Policy files: {"probs": [[pi(a|s) ...] per state]}.
TabularPolicy parse_policy_json(const std::string& text, const std::string& source = "<string>");
std::string policy_to_json(const TabularPolicy& policy);
TabularPolicy read_policy_file(const std::filesystem::path& path);

/// Config files use the TrainConfig field names; absent keys keep their defaults,
/// unknown keys are rejected.
TrainConfig parse_train_config_json(const std::string& text, const std::string& source = "<string>");
std::string train_config_to_json(const TrainConfig& config);
TrainConfig read_train_config_file(const std::filesystem::path& path);

/// Full PolicyAnalysis with residual diagnostics as pretty-printed JSON.
std::string analysis_report_json(const PolicyAnalysis& analysis);

}  // namespace apo
