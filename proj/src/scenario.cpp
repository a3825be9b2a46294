#include "misim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "misim/csv.hpp"
#include "misim/error.hpp"

namespace misim::scenario {

std::string to_string(OutlierMode m) {
  switch (m) {
    case OutlierMode::None: return "none";
    case OutlierMode::ModerateNonTarget: return "moderate";
    case OutlierMode::ExtremeNonTarget: return "extreme";
    case OutlierMode::ModerateTarget: return "target";
  }
  return "?";
}

std::string to_string(EvidenceSize s) {
  switch (s) {
    case EvidenceSize::Small: return "small";
    case EvidenceSize::Medium: return "medium";
    case EvidenceSize::Large: return "large";
  }
  return "?";
}

OutlierMode parse_outlier(const std::string& s) {
  for (auto m : {OutlierMode::None, OutlierMode::ModerateNonTarget, OutlierMode::ExtremeNonTarget,
                 OutlierMode::ModerateTarget})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown outlier mode '" + s + "' (none|moderate|extreme|target)");
}

EvidenceSize parse_size(const std::string& s) {
  for (auto z : {EvidenceSize::Small, EvidenceSize::Medium, EvidenceSize::Large})
    if (to_string(z) == s) return z;
  throw ConfigError("unknown evidence size '" + s + "' (small|medium|large)");
}

std::string ScenarioSpec::describe() const {
  std::string s = fmt::format("cv_b={} cv_w={} outlier={} size={} target_os={}", cv_between,
                              cv_within, to_string(outlier), to_string(size),
                              target_has_os ? 1 : 0);
  if (nuisance_cv) s += fmt::format(" nuisance_cv={}", *nuisance_cv);
  return s;
}

EvidenceShape EvidenceShape::of(EvidenceSize size) {
  switch (size) {
    case EvidenceSize::Small: return {{3, 2, 1, 1}};
    case EvidenceSize::Medium: return {{7, 3, 3, 2, 1, 1}};
    case EvidenceSize::Large: return {{9, 8, 6, 3, 2, 1, 1, 1}};
  }
  throw std::invalid_argument("EvidenceShape::of");
}

int EvidenceShape::n_studies() const {
  int n = 0;
  for (int s : studies) n += s;
  return n;
}

int EvidenceShape::outlier_indication() const {
  const int t = target();
  if (t < 2) throw std::logic_error("outlier needs at least two non-target indications");
  int largest = 0;
  for (int j = 1; j < t; ++j)
    if (studies[j] > studies[largest]) largest = j;
  int second = -1;
  for (int j = 0; j < t; ++j) {
    if (j == largest) continue;
    if (second < 0 || studies[j] > studies[second]) second = j;
  }
  return second;
}

double sigma_from_cv(double cv, double mu_m) {
  if (!(cv >= 0.0)) throw std::invalid_argument("cv must be >= 0");
  return cv * std::abs(std::log(mu_m));
}

SampledEffects sample_effects(const ScenarioSpec& spec, const EvidenceShape& shape, Rng& rng) {
  SampledEffects e;
  e.sigma_b = sigma_from_cv(spec.cv_between, e.mu_m);
  e.sigma_w = sigma_from_cv(spec.cv_within, e.mu_m);
  const double log_mu = std::log(e.mu_m);
  const int n_ind = shape.n_indications();

  std::vector<double> log_mj(static_cast<std::size_t>(n_ind));
  for (auto& v : log_mj) v = log_mu + e.sigma_b * std_normal(rng);

  switch (spec.outlier) {
    case OutlierMode::None: break;
    case OutlierMode::ModerateNonTarget:
    case OutlierMode::ExtremeNonTarget: {
      const double k = spec.outlier == OutlierMode::ExtremeNonTarget ? 6.0 : 1.96;
      const int j = shape.outlier_indication();
      log_mj[j] = log_mu + k * e.sigma_b;
      e.outlier = j;
      break;
    }
    case OutlierMode::ModerateTarget:
      log_mj[shape.target()] = log_mu + 1.96 * e.sigma_b;
      e.outlier = shape.target();
      break;
  }
  e.degenerate_outlier = e.outlier.has_value() && e.sigma_b == 0.0;

  e.m_j.resize(log_mj.size());
  e.m_ji.resize(log_mj.size());
  for (int j = 0; j < n_ind; ++j) {
    e.m_j[j] = std::exp(log_mj[j]);
    for (int i = 0; i < shape.studies[j]; ++i)
      e.m_ji[j].push_back(std::exp(log_mj[j] + e.sigma_w * std_normal(rng)));
  }
  return e;
}

namespace {

msm::MsmParams perturb(const msm::MsmParams& p, double log_l01, double log_l02,
                       double log_delta) {
  msm::MsmParams q = p;
  q.lambda01 = p.lambda01 * std::exp(log_l01);
  q.lambda02 = p.lambda02 * std::exp(log_l02);
  q.delta = std::max(1.0, p.delta * std::exp(log_delta));
  return q;
}

}  // namespace

MultiIndicationDataset build_dataset(const ScenarioSpec& spec, const StreamKey& key,
                                     const BuildOptions& options) {
  MultiIndicationDataset d;
  d.scenario_id = spec.id;
  d.replicate = static_cast<int>(key.replicate);
  d.shape = EvidenceShape::of(spec.size);
  d.target_has_os = spec.target_has_os;

  Rng effects_rng = make_stream(key.with(StreamRole::Effects));
  const SampledEffects effects = sample_effects(spec, d.shape, effects_rng);
  d.m_j = effects.m_j;
  d.outlier = effects.outlier;
  d.degenerate_outlier = effects.degenerate_outlier;

  const int n_ind = d.shape.n_indications();
  const msm::MsmParams base = msm::base_params(1.0);

  // Control-arm parameters per study (m set later).
  std::vector<std::vector<msm::MsmParams>> study_params(static_cast<std::size_t>(n_ind));
  d.indication_params.resize(static_cast<std::size_t>(n_ind));
  Rng nuisance_rng = make_stream(key.with(StreamRole::Nuisance));
  for (int j = 0; j < n_ind; ++j) {
    msm::MsmParams ind = base;
    double l01 = 0.0, l02 = 0.0, ld = 0.0;
    if (spec.nuisance_cv) {
      const double s = *spec.nuisance_cv;
      l01 = s * std_normal(nuisance_rng);
      l02 = s * std_normal(nuisance_rng);
      ld = s * std_normal(nuisance_rng);
      ind = perturb(base, l01, l02, ld);
    }
    ind.m = effects.m_j[j];
    d.indication_params[j] = ind;
    for (int i = 0; i < d.shape.studies[j]; ++i) {
      msm::MsmParams p = ind;
      if (spec.nuisance_cv) {
        const double s = *spec.nuisance_cv;
        p = perturb(base, l01 + s * std_normal(nuisance_rng), l02 + s * std_normal(nuisance_rng),
                    ld + s * std_normal(nuisance_rng));
      }
      p.m = effects.m_ji[j][i];
      study_params[j].push_back(p);
    }
  }

  const trial::StudyDesign shared_design =
      spec.nuisance_cv ? trial::StudyDesign{} : trial::design_study(base);

  int flat = 0;
  for (int j = 0; j < n_ind; ++j) {
    for (int i = 0; i < d.shape.studies[j]; ++i, ++flat) {
      const msm::MsmParams& p = study_params[j][i];
      const trial::StudyDesign design =
          spec.nuisance_cv ? trial::design_study(p) : shared_design;
      std::optional<trial::StudyResult> result;
      for (int attempt = 0; attempt < options.max_attempts && !result; ++attempt) {
        Rng rng = make_stream(key.with(StreamRole::Study, static_cast<std::uint64_t>(flat),
                                       static_cast<std::uint64_t>(attempt)));
        const auto patients = trial::simulate_study(p, design, rng);
        try {
          result = trial::analyse_study(patients);
        } catch (const EstimationError&) {
          ++d.resimulated_studies;
        }
      }
      if (!result)
        throw EstimationError(fmt::format("study {} of indication {} degenerate after {} attempts",
                                          i, j, options.max_attempts));
      StudyData s;
      s.result = *result;
      s.result.indication = j;
      s.result.study = i;
      s.is_target = j == d.shape.target();
      s.true_m_ji = p.m;
      if (s.is_target && !spec.target_has_os) {
        s.result.lhr_os.reset();
        s.result.se_os.reset();
      }
      d.studies.push_back(s);
    }
  }

  const msm::MsmParams& target = d.indication_params[d.shape.target()];
  msm::EstimandSpec est = options.estimand;
  est.followup = msm::solve_followup(target, 0.8);
  d.truth = msm::true_estimand(target, est);
  return d;
}

std::vector<ScenarioSpec> scenario_grid() {
  std::vector<ScenarioSpec> out;
  out.reserve(600);
  const OutlierMode modes[] = {OutlierMode::None, OutlierMode::ModerateNonTarget,
                               OutlierMode::ExtremeNonTarget, OutlierMode::ModerateTarget};
  const EvidenceSize sizes[] = {EvidenceSize::Small, EvidenceSize::Medium, EvidenceSize::Large};
  for (double cb : kCvLevels)
    for (double cw : kCvLevels)
      for (auto mode : modes)
        for (auto size : sizes)
          for (bool os : {true, false}) {
            ScenarioSpec s;
            s.cv_between = cb;
            s.cv_within = cw;
            s.outlier = mode;
            s.size = size;
            s.target_has_os = os;
            s.id = static_cast<int>(out.size());
            out.push_back(s);
          }
  return out;
}

int data_seed_id(const ScenarioSpec& spec) {
  if (spec.id < 0) return spec.id;
  return spec.target_has_os ? spec.id : spec.id - 1;
}

ScenarioSpec with_nuisance_heterogeneity(ScenarioSpec spec) {
  if (spec.outlier == OutlierMode::ModerateTarget) spec.nuisance_cv = spec.cv_between;
  return spec;
}

void write_dataset_csv(std::ostream& out, const MultiIndicationDataset& data, bool header) {
  if (header)
    out << "scenario_id,replicate,indication,study,is_target,lhr_pfs,se_pfs,lhr_os,se_os,"
           "true_m_j,truth_estimand\n";
  for (const auto& s : data.studies) {
    const auto& r = s.result;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", data.scenario_id, data.replicate,
                       r.indication, r.study, s.is_target ? 1 : 0, csv::format(r.lhr_pfs),
                       csv::format(r.se_pfs), csv::format(r.lhr_os), csv::format(r.se_os),
                       csv::format(data.m_j[r.indication]), csv::format(data.truth));
  }
}

}  // namespace misim::scenario
