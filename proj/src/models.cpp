#include "misim/models.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "misim/error.hpp"
#include "misim/stats.hpp"

namespace misim::models {

std::string to_string(Family f) {
  switch (f) {
    case Family::IP: return "ip";
    case Family::CP: return "cp";
    case Family::RP: return "rp";
    case Family::MCIP: return "mcip";
    case Family::MRIP: return "mrip";
    case Family::BiCP: return "bicp";
    case Family::BiRP: return "birp";
  }
  return "?";
}

std::string ModelSpec::id() const {
  std::string s = to_string(family);
  if (bivariate()) s += matching == Matching::Matched ? "_m" : "_um";
  s += tau == TauMode::Common ? "_tau" : "_tauj";
  return s;
}

ModelSpec ModelSpec::parse(std::string_view id) {
  for (const auto& m : all_models())
    if (m.id() == id) return m;
  throw ConfigError("unknown model id '" + std::string(id) + "'");
}

const std::vector<ModelSpec>& all_models() {
  static const std::vector<ModelSpec> models = [] {
    std::vector<ModelSpec> out;
    for (Family f : {Family::IP, Family::CP, Family::RP, Family::MCIP, Family::MRIP})
      for (TauMode t : {TauMode::Common, TauMode::Independent})
        out.push_back({f, t, Matching::None, Endpoint::OS});
    for (Matching mt : {Matching::Unmatched, Matching::Matched})
      for (Family f : {Family::BiCP, Family::BiRP})
        for (TauMode t : {TauMode::Common, TauMode::Independent})
          out.push_back({f, t, mt, Endpoint::OS});
    return out;
  }();
  return models;
}

bool EndpointData::has_data(int indication) const {
  return std::any_of(obs.begin(), obs.end(),
                     [&](const Observation& o) { return o.indication == indication; });
}

bool BivariateData::has_os(int indication) const {
  return std::any_of(obs.begin(), obs.end(), [&](const PairedObservation& o) {
    return o.indication == indication && o.y_os.has_value();
  });
}

EndpointData endpoint_data(const scenario::MultiIndicationDataset& data, Endpoint endpoint) {
  EndpointData out;
  out.n_indications = data.shape.n_indications();
  out.target = data.target();
  for (const auto& s : data.studies) {
    const auto& r = s.result;
    if (endpoint == Endpoint::PFS) {
      out.obs.push_back({r.indication, r.lhr_pfs, r.se_pfs});
    } else if (r.lhr_os && r.se_os) {
      out.obs.push_back({r.indication, *r.lhr_os, *r.se_os});
    }
  }
  return out;
}

BivariateData bivariate_data(const scenario::MultiIndicationDataset& data) {
  BivariateData out;
  out.n_indications = data.shape.n_indications();
  out.target = data.target();
  for (const auto& s : data.studies) {
    const auto& r = s.result;
    out.obs.push_back({r.indication, r.lhr_pfs, r.se_pfs, r.lhr_os, r.se_os});
  }
  return out;
}

namespace {

std::string indexed(const char* base, int j) { return fmt::format("{}[{}]", base, j); }

PosteriorFit finish(mcmc::Draws draws, std::vector<std::string> prediction_set,
                    const mcmc::ChainConfig& config) {
  PosteriorFit fit;
  fit.summary = mcmc::summarize(draws, config.split_rhat);
  fit.draws = std::move(draws);
  fit.prediction_set = std::move(prediction_set);
  fit.option1 = mcmc::check_convergence(fit.summary, mcmc::ConvergenceOption::AllParams, {});
  fit.option2 = mcmc::check_convergence(fit.summary, mcmc::ConvergenceOption::PredictionParams,
                                        fit.prediction_set);
  return fit;
}

}  // namespace

std::vector<std::string> univariate_prediction_set(Family family, int target,
                                                   bool target_has_data) {
  switch (family) {
    case Family::IP: return {indexed("D", target)};
    case Family::CP:
    case Family::MCIP: return {"D"};
    case Family::RP:
    case Family::MRIP:
      if (target_has_data) return {indexed("D", target)};
      return {"m_d", "eps_d"};
    default: throw std::invalid_argument("univariate_prediction_set: bivariate family");
  }
}

std::vector<std::string> bivariate_prediction_set(Family family, int target, bool target_has_os) {
  if (family == Family::BiCP) return {"gamma0", "gamma1"};
  if (target_has_os) return {indexed("gamma0", target), indexed("gamma1", target)};
  return {"beta0", "beta1", "xi0", "xi1"};
}

PosteriorFit fit_univariate(const EndpointData& data, const UnivariateSpec& spec,
                            const mcmc::ChainConfig& config, const StreamKey& key) {
  const bool has_target = data.has_data(data.target);
  if (spec.family == Family::IP && !has_target)
    throw NotEstimable("IP model has no data in the target indication");
  auto model = make_univariate_model(data, spec);
  return finish(mcmc::run_chains(*model, config, key),
                univariate_prediction_set(spec.family, data.target, has_target), config);
}

PosteriorFit fit_mixture(const EndpointData& data, const UnivariateSpec& spec,
                         const mcmc::ChainConfig& config, const StreamKey& key) {
  if (spec.family != Family::MCIP && spec.family != Family::MRIP)
    throw std::invalid_argument("fit_mixture: not a mixture family");
  return fit_univariate(data, spec, config, key);
}

PosteriorFit fit_bivariate(const BivariateData& data, Family family, const Priors& priors,
                           const mcmc::ChainConfig& config, const StreamKey& key) {
  auto model = make_bivariate_model(data, family, priors);
  return finish(mcmc::run_chains(*model, config, key),
                bivariate_prediction_set(family, data.target, data.has_os(data.target)), config);
}

TargetPrediction summarize_prediction(std::vector<double> draws, bool option1, bool option2) {
  TargetPrediction p;
  static constexpr double probs[] = {0.025, 0.975};
  p.mean = stats::mean(draws);
  p.sd = stats::sd(draws);
  const auto q = stats::quantiles(draws, probs);
  p.q025 = q[0];
  p.q975 = q[1];
  p.option1 = option1;
  p.option2 = option2;
  p.draws = std::move(draws);
  return p;
}

int component_index(Endpoint endpoint, Family family, TauMode tau) {
  const int t = tau == TauMode::Common ? 0 : 1;
  switch (family) {
    case Family::IP: return (endpoint == Endpoint::OS ? 0 : 10) + t;
    case Family::CP: return (endpoint == Endpoint::OS ? 2 : 12) + t;
    case Family::RP: return (endpoint == Endpoint::OS ? 4 : 14) + t;
    case Family::MCIP: return (endpoint == Endpoint::OS ? 6 : 20) + t;
    case Family::MRIP: return (endpoint == Endpoint::OS ? 8 : 22) + t;
    case Family::BiCP: return 16;
    case Family::BiRP: return 17;
  }
  throw std::logic_error("component_index");
}

FitCache::FitCache(const scenario::MultiIndicationDataset& data, mcmc::ChainConfig config,
                   StreamKey key, Priors priors)
    : data_(data), config_(config), key_(key), priors_(priors) {}

const PosteriorFit& FitCache::univariate(Endpoint endpoint, Family family, TauMode tau) {
  const int id = component_index(endpoint, family, tau);
  if (auto it = fits_.find(id); it != fits_.end()) return *it->second;
  if (auto it = failures_.find(id); it != failures_.end()) throw FitFailure(it->second);
  try {
    const UnivariateSpec spec{family, tau, priors_};
    auto fit = std::make_shared<PosteriorFit>(fit_univariate(
        endpoint_data(data_, endpoint), spec, config_,
        key_.with(StreamRole::Fit, static_cast<std::uint64_t>(id))));
    return *fits_.emplace(id, std::move(fit)).first->second;
  } catch (const FitFailure& e) {
    failures_.emplace(id, e.what());
    throw;
  }
}

const PosteriorFit& FitCache::bivariate(Family family) {
  const int id = component_index(Endpoint::OS, family, TauMode::Common);
  if (auto it = fits_.find(id); it != fits_.end()) return *it->second;
  if (auto it = failures_.find(id); it != failures_.end()) throw FitFailure(it->second);
  try {
    auto fit = std::make_shared<PosteriorFit>(
        fit_bivariate(bivariate_data(data_), family, priors_, config_,
                      key_.with(StreamRole::Fit, static_cast<std::uint64_t>(id))));
    return *fits_.emplace(id, std::move(fit)).first->second;
  } catch (const FitFailure& e) {
    failures_.emplace(id, e.what());
    throw;
  }
}

TargetPrediction predict_target(const ModelSpec& spec, FitCache& fits) {
  const auto& data = fits.data();
  if (!spec.bivariate()) {
    const PosteriorFit& fit = fits.univariate(spec.outcome, spec.family, spec.tau);
    return summarize_prediction(fit.pooled("pred"), fit.option1, fit.option2);
  }

  // Surrogate relationship and target PFS effect come from separate runs,
  // paired draw-by-draw through a random permutation.
  const Family pfs_family = spec.matching == Matching::Unmatched ? Family::IP
                            : spec.family == Family::BiCP         ? Family::CP
                                                                  : Family::RP;
  const PosteriorFit& pfs = fits.univariate(Endpoint::PFS, pfs_family, spec.tau);
  const PosteriorFit& bi = fits.bivariate(spec.family);
  const int t = data.target();
  const bool target_os = data.target_has_os;

  std::vector<double> g0, g1;
  if (spec.family == Family::BiCP) {
    g0 = bi.pooled("gamma0");
    g1 = bi.pooled("gamma1");
  } else if (target_os) {
    g0 = bi.pooled(indexed("gamma0", t));
    g1 = bi.pooled(indexed("gamma1", t));
  } else {
    g0 = bi.pooled("gamma0_pred");
    g1 = bi.pooled("gamma1_pred");
  }
  const std::vector<double> d_pfs = pfs.pooled("pred");
  if (d_pfs.size() != g0.size()) throw std::logic_error("component fits differ in draw count");

  std::vector<std::size_t> perm(d_pfs.size());
  std::iota(perm.begin(), perm.end(), 0);
  const auto model_index = static_cast<std::uint64_t>(
      std::find(all_models().begin(), all_models().end(), spec) - all_models().begin());
  Rng rng = make_stream(fits.key().with(StreamRole::Pairing, model_index));
  for (std::size_t i = perm.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
  }
  std::vector<double> pred(d_pfs.size());
  for (std::size_t k = 0; k < pred.size(); ++k) pred[k] = g0[k] + g1[k] * d_pfs[perm[k]];
  return summarize_prediction(std::move(pred), bi.option1 && pfs.option1,
                              bi.option2 && pfs.option2);
}

}  // namespace misim::models
