#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "primelens/pipeline.hpp"
#include "primelens/text.hpp"

namespace {

std::vector<std::string> csv_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : primelens::text::split(s, ',')) {
    auto t = primelens::text::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural priming measurement for language models"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string models, conditions, out_dir;
  bool deterministic = false;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Override the corpus seed");
  auto* models_opt = app.add_option("--models", models, "Comma-separated model ids to act on");
  auto* conds_opt = app.add_option("--conditions", conditions, "Comma-separated conditions to act on");
  auto* out_opt = app.add_option("--out", out_dir, "Override the output directory");
  app.add_flag("--deterministic-output", deterministic, "Omit timestamps from result files");

  // Subcommands copy this setting when created, so it has to come first.
  app.fallthrough();
  for (const char* name : {"generate", "score", "analyze", "prefs", "regress", "report"}) {
    app.add_subcommand(name);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : primelens::kExitConfig;
  }

  primelens::Overrides o;
  if (*seed_opt) o.seed = seed;
  if (*models_opt) o.models = csv_list(models);
  if (*conds_opt) o.conditions = csv_list(conditions);
  if (*out_opt) o.output_dir = out_dir;
  o.deterministic_output = deterministic;

  const std::string command = app.get_subcommands().front()->get_name();
  return primelens::run_command(command, config_path, o, std::cout, std::cerr);
}
