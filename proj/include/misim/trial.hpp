#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "misim/msm.hpp"
#include "misim/rng.hpp"

namespace misim::trial {

using msm::Arm;

struct DesignTargets {
  double alpha = 0.05;  // two-sided
  double power = 0.90;
  double hr_alt = 0.7;
};

struct StudyDesign {
  int n_total = 0;  // even, split 1:1
  double followup = 0.0;
  DesignTargets targets{};
};

// Exponential OS rate that puts `event_fraction` of control events inside
// `followup`.
[[nodiscard]] double control_os_rate(double followup, double event_fraction = 0.8);

// Lachin-Foulkes total sample size for a balanced two-arm exponential trial
// with instant accrual and no dropout, rounded up to an even number.
[[nodiscard]] int lachin_foulkes_n(double control_rate, double followup,
                                   const DesignTargets& targets = {});

// Sizes a study for control parameters `control` (m ignored): follow-up from
// the 80% control event rule, n from Lachin-Foulkes.
[[nodiscard]] StudyDesign design_study(const msm::MsmParams& control,
                                       const DesignTargets& targets = {});

struct PatientTimes {
  std::optional<double> progression;
  double death = 0.0;
};

[[nodiscard]] PatientTimes simulate_patient(const msm::MsmParams& p, Arm arm, Rng& rng);

struct PatientRecord {
  Arm arm = Arm::Control;
  double pfs_time = 0.0;
  bool pfs_event = false;
  double os_time = 0.0;
  bool os_event = false;
};

// First n_total/2 records are control, the rest treatment. `p.m` is the
// study-level multiplier.
[[nodiscard]] std::vector<PatientRecord> simulate_study(const msm::MsmParams& p,
                                                        const StudyDesign& design, Rng& rng);

enum class Endpoint { OS, PFS };

struct SurvivalObs {
  double time = 0.0;
  bool event = false;
  bool treated = false;
};

[[nodiscard]] std::vector<SurvivalObs> project(std::span<const PatientRecord> records,
                                               Endpoint endpoint);

struct CoxFit {
  double lhr = 0.0;
  double se = 0.0;
  int iterations = 0;
};

// Single binary covariate, Breslow ties, safeguarded Newton-Raphson.
// Throws EstimationError when either arm has no events or the iteration
// budget runs out.
[[nodiscard]] CoxFit cox_lhr(std::span<const SurvivalObs> data);

struct StudyResult {
  int indication = 0;
  int study = 0;
  double lhr_pfs = 0.0;
  double se_pfs = 0.0;
  std::optional<double> lhr_os;
  std::optional<double> se_os;
};

// Cox fits on both endpoints.
[[nodiscard]] StudyResult analyse_study(std::span<const PatientRecord> records);

// Header: arm,pfs_time,pfs_event,os_time,os_event
void write_patients_csv(std::ostream& out, std::span<const PatientRecord> records);

}  // namespace misim::trial
