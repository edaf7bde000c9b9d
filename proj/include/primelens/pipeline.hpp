#pragma once

// End-to-end runs driven by one JSON configuration document. Every command
// reads and writes under the run's output directory:
//
//   corpus/<Condition>.jsonl        generated items
//   cache/<model_id>.jsonl          score cache per model
//   score/incomplete.json           legs that could not be fetched
//   results/...                     priming effects, summaries, plot data
//   prefs/...                       verb preferences and their correlations
//   regress/...                     factor rows, scaling, fitted models
//   report.txt                      plain-text digest

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "primelens/corpus.hpp"
#include "primelens/ngram.hpp"
#include "primelens/regress.hpp"
#include "primelens/remote.hpp"

namespace primelens {

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitInvariant = 2,
  kExitIncomplete = 3,
  kExitConfig = 4,
};

enum class BackendKind { Oracle, Endpoint, Cache };

struct OracleSpec {
  std::size_t order = 2;
  std::vector<double> weights{0.5, 0.5};
  std::size_t context_window = 64;
  UnknownWordPolicy unknown = UnknownWordPolicy::Reject;
  // Sentences to train on, one per line. Without it the oracle is trained
  // on congruent prime-target pairs of the configured corpus.
  std::optional<std::filesystem::path> training_file;
};

struct BackendSpec {
  std::string model_id;
  BackendKind kind = BackendKind::Oracle;
  OracleSpec oracle;
  EndpointConfig endpoint;
  std::filesystem::path cache_path;  // defaults to <out>/cache/<model_id>.jsonl
};

struct RunConfig {
  // Corpus.
  std::vector<Condition> conditions;           // as declared; defines the oracle training set
  std::vector<Condition> selected_conditions;  // what commands act on
  std::size_t n_items = 0;
  std::uint64_t seed = 0;
  std::filesystem::path lexicon;
  std::filesystem::path norms;
  std::filesystem::path embeddings;
  std::optional<std::filesystem::path> sentence_embeddings;
  double cos_threshold = 0.4;
  std::size_t max_attempts = 10000;

  std::vector<BackendSpec> backends;
  std::vector<std::string> selected_models;

  // Metrics.
  bool use_delta = true;
  double tolerance = 1e-9;

  // Preferences.
  std::optional<std::filesystem::path> human_order;

  // Regression.
  std::uint64_t sample_seed = 0;
  std::size_t sample_core = 15000;
  std::size_t sample_other = 15000;
  SurprisalMode surprisal_mode = SurprisalMode::Unconditioned;

  std::filesystem::path output_dir;
  bool deterministic_output = false;

  const BackendSpec& backend(const std::string& model_id) const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> models;
  std::optional<std::vector<std::string>> conditions;
  std::optional<std::filesystem::path> output_dir;
  bool deterministic_output = false;
};

// Relative paths inside the document resolve against its directory. Throws
// ConfigError for malformed documents, unknown keys, duplicate model ids,
// unresolvable paths, and non-positive tolerances.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);
// Throws ConfigError for unknown model ids or conditions.
void apply_overrides(RunConfig& config, const Overrides& overrides);

int cmd_generate(const RunConfig& config, std::ostream& log);
int cmd_score(const RunConfig& config, std::ostream& log);
int cmd_analyze(const RunConfig& config, std::ostream& log);
int cmd_prefs(const RunConfig& config, std::ostream& log);
int cmd_regress(const RunConfig& config, std::ostream& log);
int cmd_report(const RunConfig& config, std::ostream& log);

// Loads the configuration, applies overrides and runs one subcommand,
// mapping failures onto exit codes.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const Overrides& overrides, std::ostream& log, std::ostream& err);

}  // namespace primelens
