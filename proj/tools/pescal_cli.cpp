#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pescal/pescal.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::string seeds;
  std::string preset;
  std::size_t jobs = 1;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "Experiment config (JSON)");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--seeds", f.seeds, "Seed count n (seeds 1..n) or comma-separated list");
  sub->add_option("--preset", f.preset, "Scale preset")->check(CLI::IsMember({"desk", "full"}));
  sub->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal offline RL in confounded mediated MDPs (CAL, PESCAL, FQI, CQL)"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress logs");
  app.add_flag("-v,--verbose", verbose, "Debug logs");

  CommonFlags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "Generate offline datasets with coverage filtering"},
      {"train", "Train learners, evaluate checkpoints, write curves"},
      {"evaluate", "Monte-Carlo and exact evaluation of given policies"},
      {"oracle", "Exact dynamic-programming oracle report"},
      {"figure6", "Run the 2x3 confounding-by-coverage grid"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  std::string config_text = "{}";
  nlohmann::json options = nlohmann::json::object();
  if (!flags.config.empty()) {
    std::ifstream in(flags.config);
    if (!in) {
      std::cerr << "error: cannot read config " << flags.config << '\n';
      return kExitConfig;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    config_text = ss.str();
    options["base_dir"] = std::filesystem::absolute(flags.config).parent_path().string();
  }
  if (!flags.out.empty()) options["out"] = flags.out;
  if (!flags.seeds.empty()) options["seeds"] = flags.seeds;
  if (!flags.preset.empty()) options["preset"] = flags.preset;
  options["jobs"] = flags.jobs;
  options["log_level"] = quiet ? "quiet" : (verbose ? "debug" : "info");

  char* result = nullptr;
  const pescal_status st =
      pescal_run_command(command.c_str(), config_text.c_str(), options.dump().c_str(), &result);
  if (st != PESCAL_OK) {
    std::cerr << "error: " << pescal_last_error() << '\n';
    return st == PESCAL_CONFIG_ERROR || st == PESCAL_INVALID_ARGUMENT ? kExitConfig : kExitRuntime;
  }
  std::cout << result << '\n';
  pescal_string_free(result);
  return 0;
}
