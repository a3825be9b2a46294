#include "misim/msm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <stdexcept>

#include "misim/csv.hpp"
#include "misim/error.hpp"

namespace misim::msm {

namespace {

constexpr double kDegenerateGap = 1e-10;

struct Rates {
  double a;  // progression
  double b;  // pre-progression death
  double c;  // post-progression death
};

Rates rates(const MsmParams& p, Arm arm) {
  return {p.progression_rate(arm), p.lambda02, p.lambda12()};
}

// P01(t) / P00(t) = a * (1 - exp(-k t)) / k with k = c - a - b.
double progressed_ratio(const Rates& r, double t) {
  const double k = r.c - r.a - r.b;
  if (std::abs(k) < kDegenerateGap) return r.a * t;
  return r.a * (-std::expm1(-k * t)) / k;
}

double survival(const Rates& r, double t) {
  const double p00 = std::exp(-(r.a + r.b) * t);
  const double k = r.c - r.a - r.b;
  if (std::abs(k) < kDegenerateGap) return p00 * (1.0 + r.a * t);
  const double p01 = r.a * (p00 - std::exp(-r.c * t)) / k;
  return p00 + p01;
}

// f/S = (b P00 + c P01) / (P00 + P01), written in the ratio so it stays
// finite when both probabilities underflow.
double hazard(const Rates& r, double t) {
  const double ratio = progressed_ratio(r, t);
  if (!std::isfinite(ratio)) return r.c;
  return (r.b + r.c * ratio) / (1.0 + ratio);
}

void require_time(double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("time must be >= 0");
}

}  // namespace

void MsmParams::validate() const {
  if (!(lambda01 >= 0.0) || !(lambda02 > 0.0) || !(delta >= 1.0) || !(m > 0.0))
    throw std::invalid_argument("invalid MSM parameters");
}

MsmParams base_params(double m) {
  return MsmParams{kMeanLambda01, kLambda02, kMeanDelta, m};
}

double os_survival(const MsmParams& p, Arm arm, double t) {
  require_time(t);
  return survival(rates(p, arm), t);
}

double os_density(const MsmParams& p, Arm arm, double t) {
  return os_hazard(p, arm, t) * os_survival(p, arm, t);
}

double os_hazard(const MsmParams& p, Arm arm, double t) {
  require_time(t);
  return hazard(rates(p, arm), t);
}

double pfs_survival(const MsmParams& p, Arm arm, double t) {
  require_time(t);
  return std::exp(-(p.progression_rate(arm) + p.lambda02) * t);
}

double lhr_pfs(const MsmParams& p) {
  return std::log((p.lambda01 * p.m + p.lambda02) / (p.lambda01 + p.lambda02));
}

double lhr_os(const MsmParams& p, double t) {
  return std::log(os_hazard(p, Arm::Treatment, t) / os_hazard(p, Arm::Control, t));
}

double solve_followup(const MsmParams& control, double event_fraction) {
  if (!(event_fraction > 0.0 && event_fraction < 1.0))
    throw std::invalid_argument("event_fraction must lie in (0,1)");
  const Rates r = rates(control, Arm::Control);
  const double target = 1.0 - event_fraction;
  double lo = 1e-12;
  double hi = 10.0 * std::log(1.0 / target) / r.b;
  if (survival(r, hi) > target) throw SolverError("follow-up bracket does not contain the root");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = survival(r, mid);
    if (std::abs(s - target) < 1e-12 || hi - lo < 1e-13 * hi) return mid;
    (s > target ? lo : hi) = mid;
  }
  const double mid = 0.5 * (lo + hi);
  if (std::abs(survival(r, mid) - target) < 1e-8) return mid;
  throw SolverError("follow-up bisection did not converge");
}

double true_estimand(const MsmParams& p, const EstimandSpec& spec) {
  if (!(spec.interval_days > 0.0) || !(spec.followup > 0.0))
    throw std::invalid_argument("estimand needs positive interval and follow-up");
  const Rates ctrl = rates(p, Arm::Control);
  const Rates trt = rates(p, Arm::Treatment);
  const double width = spec.interval_days / kDaysPerMonth;
  const double w_trt = spec.allocation;
  const double w_ctrl = 1.0 - spec.allocation;

  double weighted = 0.0;
  double total = 0.0;
  double t0 = 0.0;
  double s_ctrl0 = 1.0;
  double s_trt0 = 1.0;
  while (t0 < spec.followup) {
    const double t1 = std::min(t0 + width, spec.followup);
    const double s_ctrl1 = survival(ctrl, t1);
    const double s_trt1 = survival(trt, t1);
    const double events = w_ctrl * (s_ctrl0 - s_ctrl1) + w_trt * (s_trt0 - s_trt1);
    const double mid = 0.5 * (t0 + t1);
    weighted += events * std::log(hazard(trt, mid) / hazard(ctrl, mid));
    total += events;
    t0 = t1;
    s_ctrl0 = s_ctrl1;
    s_trt0 = s_trt1;
  }
  return total > 0.0 ? weighted / total : 0.0;
}

Calibration calibrate_from_medians(const CalibrationRow& row) {
  if (!(row.median_pfs > 0.0) || !(row.median_os > row.median_pfs))
    throw CalibrationError("calibration row needs median_os > median_pfs > 0");
  const double b = row.lambda02;
  const double a = std::log(2.0) / row.median_pfs - b;
  if (!(a > 0.0))
    throw CalibrationError("median PFS too long for lambda02: lambda01 would be <= 0");

  auto excess = [&](double c) { return survival(Rates{a, b, c}, row.median_os) - 0.5; };
  double lo = 1e-12;
  double hi = 1e3;
  if (excess(lo) < 0.0 || excess(hi) > 0.0)
    throw CalibrationError("no lambda12 reproduces median OS for " + row.publication);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  const double c = 0.5 * (lo + hi);
  return Calibration{a, c, c / b};
}

IndicationMeans aggregate_indication_means(std::span<const IndicationValue> rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate_indication_means: no rows");
  struct Acc {
    double log_l01 = 0.0;
    double log_delta = 0.0;
    int n = 0;
  };
  std::map<std::string, Acc> by_indication;
  for (const auto& r : rows) {
    if (!(r.lambda01 > 0.0) || !(r.delta > 0.0))
      throw std::invalid_argument("aggregate_indication_means: non-positive value");
    auto& acc = by_indication[r.indication];
    acc.log_l01 += std::log(r.lambda01);
    acc.log_delta += std::log(r.delta);
    ++acc.n;
  }
  double l01 = 0.0;
  double delta = 0.0;
  for (const auto& [name, acc] : by_indication) {
    l01 += acc.log_l01 / acc.n;
    delta += acc.log_delta / acc.n;
  }
  const auto j = static_cast<double>(by_indication.size());
  return {std::exp(l01 / j), std::exp(delta / j)};
}

std::vector<SurrogacyPoint> surrogacy_sweep(const MsmParams& base, SweepParameter vary,
                                            std::span<const double> grid, double t) {
  std::vector<SurrogacyPoint> out;
  out.reserve(grid.size());
  for (double v : grid) {
    MsmParams p = base;
    switch (vary) {
      case SweepParameter::M: p.m = v; break;
      case SweepParameter::Lambda01: p.lambda01 = v; break;
      case SweepParameter::Lambda02: p.lambda02 = v; break;
      case SweepParameter::Delta: p.delta = v; break;
    }
    p.validate();
    out.push_back({v, lhr_pfs(p), lhr_os(p, t)});
  }
  return out;
}

std::vector<CalibrationRow> read_calibration_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("calibration CSV is empty");
  const auto header = csv::split(line);
  const std::vector<std::string> expected{"cancer_type", "publication", "line", "median_pfs",
                                          "median_os"};
  if (header != expected) throw IoError("unexpected calibration CSV header: " + line);
  std::vector<CalibrationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    if (f.size() != expected.size()) throw IoError("malformed calibration row: " + line);
    CalibrationRow row;
    row.cancer_type = f[0];
    row.publication = f[1];
    row.line = f[2];
    row.median_pfs = csv::to_double(f[3]);
    row.median_os = csv::to_double(f[4]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace misim::msm
