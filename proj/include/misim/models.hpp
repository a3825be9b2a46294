#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "misim/mcmc.hpp"
#include "misim/scenario.hpp"
#include "misim/trial.hpp"

// Multi-indication synthesis models: univariate (IP/CP/RP), mixture
// (MCIP/MRIP) and bivariate surrogacy (Bi-CP/Bi-RP) models, and the rules
// that turn their posteriors into a prediction of the target LHR on OS.
namespace misim::models {

using trial::Endpoint;

enum class Family { IP, CP, RP, MCIP, MRIP, BiCP, BiRP };
enum class TauMode { Common, Independent };
enum class Matching { None, Unmatched, Matched };

[[nodiscard]] std::string to_string(Family f);

struct ModelSpec {
  Family family = Family::IP;
  TauMode tau = TauMode::Common;
  Matching matching = Matching::None;  // bivariate only
  Endpoint outcome = Endpoint::OS;

  [[nodiscard]] bool bivariate() const {
    return family == Family::BiCP || family == Family::BiRP;
  }
  [[nodiscard]] bool mixture() const {
    return family == Family::MCIP || family == Family::MRIP;
  }
  // Stable identifier, e.g. "rp_tauj" or "birp_um_tau".
  [[nodiscard]] std::string id() const;
  [[nodiscard]] static ModelSpec parse(std::string_view id);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// The 18 OS-prediction configurations in canonical output order.
[[nodiscard]] const std::vector<ModelSpec>& all_models();

struct Priors {
  double location_sd = 10.0;  // N(0, sd^2) on every location parameter
  double scale_sd = 0.5;      // half-normal scale on every SD parameter
  double psi_scale = 0.5;     // Bi-RP psi_j ~ |N(0, h)| with h = psi_scale^2
  // Test hooks: hold a parameter at a value instead of sampling it.
  std::optional<double> fixed_tau;
  std::optional<double> fixed_eps;
  std::optional<double> fixed_p;
};

struct Observation {
  int indication = 0;
  double y = 0.0;
  double se = 0.0;
};

struct EndpointData {
  int n_indications = 0;
  int target = 0;
  std::vector<Observation> obs;

  [[nodiscard]] bool has_data(int indication) const;
};

struct PairedObservation {
  int indication = 0;
  double y_pfs = 0.0;
  double se_pfs = 0.0;
  std::optional<double> y_os;
  std::optional<double> se_os;
};

struct BivariateData {
  int n_indications = 0;
  int target = 0;
  std::vector<PairedObservation> obs;

  [[nodiscard]] bool has_os(int indication) const;
};

[[nodiscard]] EndpointData endpoint_data(const scenario::MultiIndicationDataset& data,
                                         Endpoint endpoint);
[[nodiscard]] BivariateData bivariate_data(const scenario::MultiIndicationDataset& data);

struct UnivariateSpec {
  Family family = Family::IP;  // IP, CP, RP, MCIP or MRIP
  TauMode tau = TauMode::Common;
  Priors priors{};
};

// Parameter names: "D" (common effect), "D[j]", "tau", "tau[j]", "m_d",
// "eps_d", "p", "c[j]"; "pred" is the derived target prediction.
[[nodiscard]] std::unique_ptr<mcmc::Model> make_univariate_model(const EndpointData& data,
                                                                 const UnivariateSpec& spec);
// Parameter names: "rho"; Bi-CP "gamma0", "gamma1", "psi"; Bi-RP "beta0",
// "beta1", "xi0", "xi1", "gamma0[j]", "gamma1[j]", "psi[j]", and the derived
// predictive draws "gamma0_pred", "gamma1_pred".
[[nodiscard]] std::unique_ptr<mcmc::Model> make_bivariate_model(const BivariateData& data,
                                                                Family family,
                                                                const Priors& priors);

struct PosteriorFit {
  mcmc::Draws draws;
  mcmc::PosteriorSummary summary;
  std::vector<std::string> prediction_set;
  bool option1 = false;
  bool option2 = false;

  [[nodiscard]] std::vector<double> pooled(std::string_view name) const {
    return draws.pooled(draws.index_of(name));
  }
};

// Parameters whose convergence gates a prediction (convergence Option 2).
[[nodiscard]] std::vector<std::string> univariate_prediction_set(Family family, int target,
                                                                 bool target_has_data);
[[nodiscard]] std::vector<std::string> bivariate_prediction_set(Family family, int target,
                                                                bool target_has_os);

// Throws NotEstimable for IP without target data.
[[nodiscard]] PosteriorFit fit_univariate(const EndpointData& data, const UnivariateSpec& spec,
                                          const mcmc::ChainConfig& config, const StreamKey& key);
[[nodiscard]] PosteriorFit fit_mixture(const EndpointData& data, const UnivariateSpec& spec,
                                       const mcmc::ChainConfig& config, const StreamKey& key);
[[nodiscard]] PosteriorFit fit_bivariate(const BivariateData& data, Family family,
                                         const Priors& priors, const mcmc::ChainConfig& config,
                                         const StreamKey& key);

struct TargetPrediction {
  std::vector<double> draws;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  bool option1 = false;
  bool option2 = false;
};

[[nodiscard]] TargetPrediction summarize_prediction(std::vector<double> draws, bool option1,
                                                    bool option2);

// Component fits of one dataset, shared between models. Each component is
// fitted at most once, on its own stream, so results do not depend on which
// other models were requested. Not thread-safe across concurrent fills of
// the same component; use one cache per dataset.
class FitCache {
 public:
  FitCache(const scenario::MultiIndicationDataset& data, mcmc::ChainConfig config, StreamKey key,
           Priors priors = {});

  const PosteriorFit& univariate(Endpoint endpoint, Family family, TauMode tau);
  const PosteriorFit& bivariate(Family family);

  [[nodiscard]] const scenario::MultiIndicationDataset& data() const { return data_; }
  [[nodiscard]] const mcmc::ChainConfig& config() const { return config_; }
  [[nodiscard]] const StreamKey& key() const { return key_; }

 private:
  const scenario::MultiIndicationDataset& data_;
  mcmc::ChainConfig config_;
  StreamKey key_;
  Priors priors_;
  std::map<int, std::shared_ptr<PosteriorFit>> fits_;
  std::map<int, std::string> failures_;
};

// Stable component index used for fit seeding.
[[nodiscard]] int component_index(Endpoint endpoint, Family family, TauMode tau);

// Target prediction of `spec` on the cached dataset. Throws NotEstimable
// (IP without target OS) or FitFailure.
[[nodiscard]] TargetPrediction predict_target(const ModelSpec& spec, FitCache& fits);

}  // namespace misim::models
