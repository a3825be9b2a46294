#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "misim/msm.hpp"
#include "misim/rng.hpp"
#include "misim/trial.hpp"

namespace misim::scenario {

inline constexpr std::array<double, 5> kCvLevels{0.0, 0.07, 0.15, 0.30, 0.50};

enum class OutlierMode { None, ModerateNonTarget, ExtremeNonTarget, ModerateTarget };
enum class EvidenceSize { Small, Medium, Large };

[[nodiscard]] std::string to_string(OutlierMode m);
[[nodiscard]] std::string to_string(EvidenceSize s);
[[nodiscard]] OutlierMode parse_outlier(const std::string& s);
[[nodiscard]] EvidenceSize parse_size(const std::string& s);

struct ScenarioSpec {
  double cv_between = 0.0;
  double cv_within = 0.0;
  OutlierMode outlier = OutlierMode::None;
  EvidenceSize size = EvidenceSize::Small;
  bool target_has_os = true;
  // Log-scale SD of the lambda01/lambda02/delta multipliers; absent = off.
  std::optional<double> nuisance_cv;
  int id = -1;  // position in scenario_grid(), -1 for ad-hoc specs

  [[nodiscard]] std::string describe() const;
};

/// Studies per indication in declared order; the target (one study) is last.
struct EvidenceShape {
  std::vector<int> studies;

  [[nodiscard]] static EvidenceShape of(EvidenceSize size);
  [[nodiscard]] int n_indications() const { return static_cast<int>(studies.size()); }
  [[nodiscard]] int target() const { return n_indications() - 1; }
  [[nodiscard]] int n_studies() const;
  // Second-largest non-target indication, earliest on ties.
  [[nodiscard]] int outlier_indication() const;
};

// Log-scale SD for a coefficient of variation relative to |ln(mu_M)|.
[[nodiscard]] double sigma_from_cv(double cv, double mu_m = msm::kMeanM);

struct SampledEffects {
  double mu_m = msm::kMeanM;
  double sigma_b = 0.0;
  double sigma_w = 0.0;
  std::vector<double> m_j;                // per indication
  std::vector<std::vector<double>> m_ji;  // [indication][study]
  std::optional<int> outlier;             // indication whose m_j was overridden
  bool degenerate_outlier = false;        // outlier requested but sigma_b == 0
};

[[nodiscard]] SampledEffects sample_effects(const ScenarioSpec& spec, const EvidenceShape& shape,
                                            Rng& rng);

struct StudyData {
  trial::StudyResult result;
  bool is_target = false;
  double true_m_ji = 0.0;
};

struct MultiIndicationDataset {
  int scenario_id = -1;
  int replicate = 0;
  EvidenceShape shape;
  bool target_has_os = true;
  std::vector<StudyData> studies;  // grouped by indication, declared order
  std::vector<double> m_j;
  std::vector<msm::MsmParams> indication_params;  // m = m_j
  double truth = 0.0;
  std::optional<int> outlier;
  bool degenerate_outlier = false;
  int resimulated_studies = 0;

  [[nodiscard]] int target() const { return shape.target(); }
};

struct BuildOptions {
  int max_attempts = 100;  // per study, on degenerate Cox fits
  msm::EstimandSpec estimand{};  // followup filled per target
};

// `key` carries (master, scenario seed id, replicate); roles are set here.
// Throws EstimationError if a study stays degenerate after max_attempts.
[[nodiscard]] MultiIndicationDataset build_dataset(const ScenarioSpec& spec, const StreamKey& key,
                                                   const BuildOptions& options = {});

// 5 x 5 x 4 x 3 x 2 cells, ordered lexicographically by
// (cv_between, cv_within, outlier, size, target_has_os) with OS-in-target
// first, so that id ^ 1 is the paired scenario differing only in target OS.
[[nodiscard]] std::vector<ScenarioSpec> scenario_grid();

// Scenario id whose simulated data this spec reuses (the OS-in-target twin).
[[nodiscard]] int data_seed_id(const ScenarioSpec& spec);

// Grid scenarios with target outlier, nuisance heterogeneity at cv_between.
[[nodiscard]] ScenarioSpec with_nuisance_heterogeneity(ScenarioSpec spec);

// Header: scenario_id,replicate,indication,study,is_target,lhr_pfs,se_pfs,
//         lhr_os,se_os,true_m_j,truth_estimand
void write_dataset_csv(std::ostream& out, const MultiIndicationDataset& data, bool header = true);

}  // namespace misim::scenario
