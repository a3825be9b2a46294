#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "misim/mcmc.hpp"
#include "misim/metrics.hpp"
#include "misim/models.hpp"
#include "misim/scenario.hpp"

// Pipeline orchestration: configuration, scenario selection, execution of
// (scenario, replicate) units, persistence and resume.
namespace misim::runner {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kSuccess = 0, kConfigError = 1, kPartialFailure = 2, kIoAbort = 3 };

struct RunConfig {
  std::uint64_t seed = 20240611;
  int replicates = 100;
  // Comma-separated ids, ranges "a-b" and predicates "key=v1|v2" with keys
  // cv_b, cv_w, outlier, size, target_os; "all" selects the whole grid.
  std::string scenarios = "all";
  std::vector<std::string> models;  // empty = all 18
  std::string profile = "desk";
  mcmc::ChainConfig chains = mcmc::ChainConfig::desk();
  models::Priors priors{};
  // "grid", or "nuisance" to add nuisance heterogeneity to target-outlier cells.
  std::string preset = "grid";
  int max_attempts = 100;
  std::filesystem::path out = "run";
  int workers = 1;
  bool resume = false;
  bool dump_datasets = false;

  void apply_profile(const std::string& name);
  void validate() const;
  // Fields absent from `j` keep their current values. Throws ConfigError.
  void merge_json(const nlohmann::json& j);
  // Snapshot of every field that affects results (excludes out, workers, resume).
  [[nodiscard]] nlohmann::json to_json() const;
};

[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

[[nodiscard]] std::vector<scenario::ScenarioSpec> select_scenarios(const std::string& filter,
                                                                   const std::string& preset);
[[nodiscard]] std::vector<models::ModelSpec> select_models(const std::vector<std::string>& ids);

// One dataset and all requested model predictions for it.
[[nodiscard]] std::vector<metrics::ReplicateOutcome> run_unit(
    const scenario::ScenarioSpec& spec, int replicate, const RunConfig& config,
    const std::vector<models::ModelSpec>& models,
    scenario::MultiIndicationDataset* dataset_out = nullptr);

[[nodiscard]] scenario::MultiIndicationDataset unit_dataset(const scenario::ScenarioSpec& spec,
                                                            int replicate,
                                                            const RunConfig& config);

struct RunSummary {
  int units_total = 0;
  int units_run = 0;      // executed in this invocation
  int units_resumed = 0;  // recovered from the journal
  int rows = 0;
  int failed = 0;
  int not_estimable = 0;
  double seconds = 0.0;
  ExitCode exit_code = kSuccess;
};

// Writes outcomes.csv, metrics.csv and manifest.json under config.out.
// Throws ConfigError or IoError.
RunSummary run(const RunConfig& config, std::ostream* log = nullptr);

}  // namespace misim::runner
