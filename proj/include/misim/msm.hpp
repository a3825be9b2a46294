#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

// Closed-form survival quantities of the three-state illness-death model
// (stable -> progressed -> dead, with direct stable -> dead). All rates are
// per month and all times in months.
namespace misim::msm {

inline constexpr double kDaysPerMonth = 30.4375;
// Pre-progression death rate shared by every study and arm.
inline constexpr double kLambda02 = 0.0102;
// Indication means of the calibrated control-arm parameters.
inline constexpr double kMeanLambda01 = 0.097;
inline constexpr double kMeanDelta = 6.32;
inline constexpr double kMeanM = 0.6;

enum class Arm { Control, Treatment };

struct MsmParams {
  double lambda01 = kMeanLambda01;
  double lambda02 = kLambda02;
  double delta = kMeanDelta;  // post-progression death rate = delta * lambda02
  double m = 1.0;             // treatment multiplier on lambda01

  [[nodiscard]] double lambda12() const noexcept { return delta * lambda02; }
  [[nodiscard]] double progression_rate(Arm arm) const noexcept {
    return arm == Arm::Treatment ? lambda01 * m : lambda01;
  }
  // Throws std::invalid_argument unless lambda01 >= 0, lambda02 > 0,
  // delta >= 1 and m > 0. lambda01 == 0 is accepted as the no-progression limit.
  void validate() const;
};

[[nodiscard]] MsmParams base_params(double m = kMeanM);

[[nodiscard]] double os_survival(const MsmParams& p, Arm arm, double t);
[[nodiscard]] double os_density(const MsmParams& p, Arm arm, double t);
[[nodiscard]] double os_hazard(const MsmParams& p, Arm arm, double t);
[[nodiscard]] double pfs_survival(const MsmParams& p, Arm arm, double t);

// Time-constant: PFS hazards are a*M + b vs a + b.
[[nodiscard]] double lhr_pfs(const MsmParams& p);
[[nodiscard]] double lhr_os(const MsmParams& p, double t);

// Follow-up at which the control arm has observed `event_fraction` of OS events.
[[nodiscard]] double solve_followup(const MsmParams& control, double event_fraction = 0.8);

struct EstimandSpec {
  double interval_days = 1.5;
  double followup = 0.0;  // months
  double allocation = 0.5;  // fraction randomised to treatment
};

// Event-weighted average of lhr_os over [0, followup]. `p.m` must be the
// indication-level multiplier.
[[nodiscard]] double true_estimand(const MsmParams& p, const EstimandSpec& spec);

struct CalibrationRow {
  std::string cancer_type;
  std::string publication;
  std::string line;
  double median_pfs = 0.0;
  double median_os = 0.0;
  double lambda02 = kLambda02;
};

struct Calibration {
  double lambda01 = 0.0;
  double lambda12 = 0.0;
  double delta = 0.0;
};

// Exponential PFS gives lambda01 from the PFS median; lambda12 is then the
// root of S_os(median_os) = 1/2. Throws CalibrationError.
[[nodiscard]] Calibration calibrate_from_medians(const CalibrationRow& row);

struct IndicationValue {
  std::string indication;
  double lambda01 = 0.0;
  double delta = 0.0;
};

struct IndicationMeans {
  double lambda01 = 0.0;
  double delta = 0.0;
};

// Geometric mean over indications of per-indication geometric means.
[[nodiscard]] IndicationMeans aggregate_indication_means(std::span<const IndicationValue> rows);

enum class SweepParameter { M, Lambda01, Lambda02, Delta };

struct SurrogacyPoint {
  double value = 0.0;
  double lhr_pfs = 0.0;
  double lhr_os = 0.0;
};

[[nodiscard]] std::vector<SurrogacyPoint> surrogacy_sweep(const MsmParams& base,
                                                          SweepParameter vary,
                                                          std::span<const double> grid,
                                                          double t);

// Header: cancer_type,publication,line,median_pfs,median_os
[[nodiscard]] std::vector<CalibrationRow> read_calibration_csv(std::istream& in);

}  // namespace misim::msm
