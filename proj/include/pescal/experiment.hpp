#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pescal/dataset.hpp"
#include "pescal/eval.hpp"
#include "pescal/learners.hpp"
#include "pescal/m2dp.hpp"

namespace pescal {

enum class CoverageKind { Full, KeepK, KeepFraction };

struct CoverageSetting {
  CoverageKind kind = CoverageKind::Full;
  std::size_t keep_k = 0;
  double keep_fraction = 0.5;
  std::vector<int> suboptimal_actions{0, 1};

  std::string name() const;
  /// Number of leading tuples kept verbatim from a dataset of size n.
  std::size_t kept_prefix(std::size_t n) const;
};

struct LearnerSetup {
  Learner learner = Learner::Cal;
  TrainConfig cfg;
};

struct ExperimentConfig {
  SyntheticM2dpSpec spec;
  std::size_t n_tuples = 50000;
  std::size_t trajectory_horizon = 500;
  std::uint64_t dataset_seed = 0;
  std::string dataset_dir;  // read seed_<s>.csv from here instead of generating
  CoverageSetting coverage;
  std::vector<LearnerSetup> learners;
  EvalProtocol eval;
  std::vector<std::uint64_t> seeds;
  double z = 1.96;
  std::string output_dir = "out";
  std::string preset = "desk";
  std::vector<nlohmann::json> policies;  // for `evaluate`
  std::string policies_path;

  nlohmann::json canonical() const;
  std::uint64_t hash() const;
};

/// Command-line overrides applied on top of the JSON config.
struct RunOptions {
  std::optional<std::string> out;
  std::optional<std::string> seeds;  // "n" or "a,b,c"
  std::optional<std::string> preset;
  std::size_t jobs = 1;
};

RunOptions run_options_from_json(const nlohmann::json& j);

/// Seeds from "n" (1..n) or a comma-separated list.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/**
 * Builds a validated config. The preset (from `opts` or the config) supplies
 * seed count and training length unless the config sets them explicitly;
 * `opts` then overrides output directory and seeds. Relative paths resolve
 * against `base_dir`.
 */
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const RunOptions& opts,
                                         const std::filesystem::path& base_dir = {});

/// Offline data for one seed after the coverage filter.
Dataset seed_dataset(const M2dpModel& model, const ExperimentConfig& cfg, std::uint64_t seed);
Dataset raw_seed_dataset(const M2dpModel& model, const ExperimentConfig& cfg, std::uint64_t seed);

struct LearnerRun {
  Learner learner = Learner::Cal;
  std::uint64_t seed = 0;
  LearningCurve curve;
  DeterministicPolicy final_policy;
  std::vector<double> final_q;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::size_t n_tuples = 0;
  std::vector<LearnerRun> learners;  // in config order
};

/// Nuisance estimation, training and evaluation of every learner on one seed.
SeedRun run_seed(const M2dpModel& model, const ExperimentConfig& cfg, const Dataset& data,
                 std::uint64_t seed);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first error.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::vector<SeedRun> run_all_seeds(const M2dpModel& model, const ExperimentConfig& cfg,
                                   std::size_t jobs);

struct FinalStat {
  std::string learner;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

/// Mean and sd across seeds of the last smoothed value of each learner.
std::vector<FinalStat> final_statistics(const std::vector<SeedRun>& runs,
                                        const ExperimentConfig& cfg);

/// Pairwise ordering verdicts ("greater", "less", "tie") using one pooled
/// standard error as the margin.
nlohmann::json ordering_summary(const std::vector<FinalStat>& stats);

/// Subcommands. Each writes into cfg.output_dir and returns a JSON summary.
nlohmann::json cmd_gen_data(const ExperimentConfig& cfg, std::size_t jobs);
nlohmann::json cmd_train(const ExperimentConfig& cfg, std::size_t jobs);
nlohmann::json cmd_evaluate(const ExperimentConfig& cfg, std::size_t jobs);
nlohmann::json cmd_oracle(const ExperimentConfig& cfg);
nlohmann::json cmd_figure6(const ExperimentConfig& cfg, std::size_t jobs);

nlohmann::json run_command(const std::string& command, const nlohmann::json& config,
                           const RunOptions& opts, const std::filesystem::path& base_dir = {});

/// Writes to `path` through a temporary sibling and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace pescal
