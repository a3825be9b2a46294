#include "misim/trial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "misim/error.hpp"
#include "misim/stats.hpp"

namespace misim::trial {

double control_os_rate(double followup, double event_fraction) {
  return -std::log(1.0 - event_fraction) / followup;
}

int lachin_foulkes_n(double control_rate, double followup, const DesignTargets& targets) {
  if (!(targets.hr_alt > 0.0 && targets.hr_alt < 1.0))
    throw std::invalid_argument("lachin_foulkes_n: hr_alt must lie in (0,1)");
  if (!(control_rate > 0.0) || !(followup > 0.0))
    throw std::invalid_argument("lachin_foulkes_n: rate and follow-up must be positive");
  const double q = 0.5;  // balanced allocation
  const double rate_c = control_rate;
  const double rate_e = targets.hr_alt * control_rate;
  auto event_prob = [&](double rate) { return -std::expm1(-rate * followup); };
  const double p_bar = event_prob(q * rate_e + q * rate_c);
  const double eta_null = (1.0 / q + 1.0 / q) / p_bar;
  const double eta_alt = 1.0 / (q * event_prob(rate_e)) + 1.0 / (q * event_prob(rate_c));
  const double z_alpha = stats::normal_quantile(1.0 - targets.alpha / 2.0);
  const double z_beta = stats::normal_quantile(targets.power);
  const double root = z_alpha * std::sqrt(eta_null) + z_beta * std::sqrt(eta_alt);
  const double log_hr = std::log(targets.hr_alt);
  const double n = root * root / (log_hr * log_hr);
  return 2 * static_cast<int>(std::ceil(n / 2.0 - 1e-9));
}

StudyDesign design_study(const msm::MsmParams& control, const DesignTargets& targets) {
  StudyDesign d;
  d.targets = targets;
  d.followup = msm::solve_followup(control, 0.8);
  d.n_total = lachin_foulkes_n(control_os_rate(d.followup), d.followup, targets);
  return d;
}

PatientTimes simulate_patient(const msm::MsmParams& p, Arm arm, Rng& rng) {
  const double a = p.progression_rate(arm);
  const double b = p.lambda02;
  const double leave = exponential(rng, a + b);
  if (uniform01(rng) * (a + b) < a) {
    return {leave, leave + exponential(rng, p.lambda12())};
  }
  return {std::nullopt, leave};
}

std::vector<PatientRecord> simulate_study(const msm::MsmParams& p, const StudyDesign& design,
                                          Rng& rng) {
  if (design.n_total < 4 || design.n_total % 2 != 0 || !(design.followup > 0.0))
    throw std::invalid_argument("simulate_study: invalid design");
  std::vector<PatientRecord> out;
  out.reserve(static_cast<std::size_t>(design.n_total));
  const double fu = design.followup;
  for (int i = 0; i < design.n_total; ++i) {
    const Arm arm = i < design.n_total / 2 ? Arm::Control : Arm::Treatment;
    const PatientTimes t = simulate_patient(p, arm, rng);
    const double pfs = t.progression.value_or(t.death);
    PatientRecord r;
    r.arm = arm;
    r.pfs_event = pfs <= fu;
    r.pfs_time = std::min(pfs, fu);
    r.os_event = t.death <= fu;
    r.os_time = std::min(t.death, fu);
    out.push_back(r);
  }
  return out;
}

std::vector<SurvivalObs> project(std::span<const PatientRecord> records, Endpoint endpoint) {
  std::vector<SurvivalObs> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const bool treated = r.arm == Arm::Treatment;
    if (endpoint == Endpoint::OS)
      out.push_back({r.os_time, r.os_event, treated});
    else
      out.push_back({r.pfs_time, r.pfs_event, treated});
  }
  return out;
}

namespace {

// Risk-set summary at one distinct event time.
struct EventTime {
  double at_risk_ctrl;
  double at_risk_trt;
  double events_ctrl;
  double events_trt;
};

struct PartialLikelihood {
  double loglik;
  double score;
  double information;
};

PartialLikelihood evaluate(std::span<const EventTime> times, double beta) {
  PartialLikelihood out{0.0, 0.0, 0.0};
  const double eb = std::exp(beta);
  for (const auto& e : times) {
    const double d = e.events_ctrl + e.events_trt;
    const double denom = e.at_risk_ctrl + e.at_risk_trt * eb;
    const double share = e.at_risk_trt * eb / denom;
    out.loglik += e.events_trt * beta - d * std::log(denom);
    out.score += e.events_trt - d * share;
    out.information += d * share * (1.0 - share);
  }
  return out;
}

}  // namespace

CoxFit cox_lhr(std::span<const SurvivalObs> data) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return data[i].time > data[j].time; });

  std::vector<EventTime> times;
  double n_ctrl = 0.0;
  double n_trt = 0.0;
  double total_ctrl = 0.0;
  double total_trt = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = data[order[k]].time;
    double d_ctrl = 0.0;
    double d_trt = 0.0;
    for (; k < order.size() && data[order[k]].time == t; ++k) {
      const auto& o = data[order[k]];
      (o.treated ? n_trt : n_ctrl) += 1.0;
      if (o.event) (o.treated ? d_trt : d_ctrl) += 1.0;
    }
    if (d_ctrl + d_trt > 0.0) times.push_back({n_ctrl, n_trt, d_ctrl, d_trt});
    total_ctrl += d_ctrl;
    total_trt += d_trt;
  }
  if (total_ctrl == 0.0 || total_trt == 0.0)
    throw EstimationError("Cox fit needs events in both arms");

  double beta = 0.0;
  PartialLikelihood cur = evaluate(times, beta);
  for (int it = 1; it <= 50; ++it) {
    if (!(cur.information > 0.0)) throw EstimationError("Cox information is not positive");
    double step = cur.score / cur.information;
    PartialLikelihood next = evaluate(times, beta + step);
    // Near the optimum log-likelihood changes fall below rounding error; only
    // a real decrease triggers halving.
    const double slack = 1e-12 * (1.0 + std::abs(cur.loglik));
    int halvings = 0;
    while (!(next.loglik >= cur.loglik - slack) && halvings < 30) {
      step *= 0.5;
      next = evaluate(times, beta + step);
      ++halvings;
    }
    if (!(next.loglik >= cur.loglik - slack)) throw EstimationError("Cox step-halving exhausted");
    beta += step;
    cur = next;
    if (std::abs(cur.score) < 1e-8) {
      if (!(cur.information > 0.0)) throw EstimationError("Cox information is not positive");
      return {beta, 1.0 / std::sqrt(cur.information), it};
    }
  }
  throw EstimationError("Cox Newton-Raphson did not converge in 50 iterations");
}

StudyResult analyse_study(std::span<const PatientRecord> records) {
  const auto pfs = cox_lhr(project(records, Endpoint::PFS));
  const auto os = cox_lhr(project(records, Endpoint::OS));
  StudyResult r;
  r.lhr_pfs = pfs.lhr;
  r.se_pfs = pfs.se;
  r.lhr_os = os.lhr;
  r.se_os = os.se;
  return r;
}

void write_patients_csv(std::ostream& out, std::span<const PatientRecord> records) {
  out << "arm,pfs_time,pfs_event,os_time,os_event\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{}\n", r.arm == Arm::Treatment ? "treatment" : "control",
                       r.pfs_time, r.pfs_event ? 1 : 0, r.os_time, r.os_event ? 1 : 0);
  }
}

}  // namespace misim::trial
