#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "misim/error.hpp"
#include "misim/rng.hpp"

namespace misim::mcmc {

struct ChainConfig {
  int n_chains = 3;
  int burn_in = 5000;
  int samples = 15000;  // retained per chain, after burn-in
  int thin = 1;
  double init_spread = 1.0;  // prior SDs between adjacent chain starts
  bool split_rhat = false;
  bool parallel_chains = false;

  [[nodiscard]] static ChainConfig desk() { return {}; }
  [[nodiscard]] static ChainConfig paper() {
    ChainConfig c;
    c.burn_in = 50000;
    c.samples = 150000;
    return c;
  }
  void validate() const;
  // Offset of chain `c` in units of spread, centred on zero.
  [[nodiscard]] double init_offset(int c) const {
    return (c - (n_chains - 1) / 2.0) * init_spread;
  }
};

enum class ParamKind {
  Parameter,  // enters the all-parameter convergence check
  Indicator,  // mixture labels: monitored but never checked
  Derived,    // functions of parameters and fresh noise (predictive draws)
};

struct ParamInfo {
  std::string name;
  ParamKind kind = ParamKind::Parameter;
};

/// State and update kernels of one chain.
class Chain {
 public:
  virtual ~Chain() = default;
  virtual void sweep(Rng& rng, bool adapt) = 0;
  virtual void read(std::span<double> out) const = 0;
};

/// A model as a conditional-update program: parameter layout plus a chain
/// factory that places chain `c` at its overdispersed start.
class Model {
 public:
  virtual ~Model() = default;
  [[nodiscard]] virtual const std::vector<ParamInfo>& parameters() const = 0;
  [[nodiscard]] virtual std::unique_ptr<Chain> start(int chain, const ChainConfig& config,
                                                     Rng& rng) const = 0;
};

/// Retained draws, stored parameter-major so each (parameter, chain) trace is
/// contiguous.
class Draws {
 public:
  Draws() = default;
  Draws(std::vector<ParamInfo> params, int n_chains, int n_iter);

  [[nodiscard]] int n_chains() const { return n_chains_; }
  [[nodiscard]] int n_iter() const { return n_iter_; }
  [[nodiscard]] int n_params() const { return static_cast<int>(params_.size()); }
  [[nodiscard]] const std::vector<ParamInfo>& params() const { return params_; }
  // -1 when absent.
  [[nodiscard]] int find(std::string_view name) const;
  [[nodiscard]] int index_of(std::string_view name) const;  // throws if absent

  [[nodiscard]] std::span<const double> trace(int param, int chain) const;
  [[nodiscard]] std::span<double> trace(int param, int chain);
  [[nodiscard]] std::vector<std::span<const double>> traces(int param) const;
  // All chains concatenated in chain order.
  [[nodiscard]] std::vector<double> pooled(int param) const;

 private:
  std::vector<ParamInfo> params_;
  int n_chains_ = 0;
  int n_iter_ = 0;
  std::vector<double> data_;
};

// Chain c draws from key.with(StreamRole::Chain, key.index, c). Identical
// (model, config, key) give bit-identical draws, parallel or not.
[[nodiscard]] Draws run_chains(const Model& model, const ChainConfig& config, const StreamKey& key);

// Classic potential scale reduction factor. Chains of equal length >= 10.
// Zero within-chain variance: 1 when chain means agree, +inf otherwise.
[[nodiscard]] double gelman_rubin(std::span<const std::span<const double>> chains,
                                  bool split = false);

struct ParamSummary {
  std::string name;
  ParamKind kind = ParamKind::Parameter;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double rhat = 1.0;
};

struct PosteriorSummary {
  std::vector<ParamSummary> params;
  [[nodiscard]] const ParamSummary* find(std::string_view name) const;
};

[[nodiscard]] PosteriorSummary summarize(const Draws& draws, bool split_rhat = false);

enum class ConvergenceOption { AllParams, PredictionParams };

inline constexpr double kRhatThreshold = 1.1;

[[nodiscard]] bool check_convergence(const PosteriorSummary& summary, ConvergenceOption option,
                                     std::span<const std::string> prediction_set,
                                     double threshold = kRhatThreshold);

// ---- kernels -------------------------------------------------------------

struct NormalDraw {
  double mean = 0.0;
  double var = 0.0;
};

// Normal prior N(prior_mean, prior_var) times likelihood terms summarised by
// precision sum_w and weighted sum sum_wy.
[[nodiscard]] inline NormalDraw normal_posterior(double prior_mean, double prior_var,
                                                 double sum_w, double sum_wy) {
  const double prec = 1.0 / prior_var + sum_w;
  return {(prior_mean / prior_var + sum_wy) / prec, 1.0 / prec};
}

[[nodiscard]] inline double draw(const NormalDraw& n, Rng& rng) {
  return n.mean + std::sqrt(n.var) * std_normal(rng);
}

/// Univariate slice sampler with stepping out and shrinkage (Neal 2003).
template <class LogDensity>
double slice_sample(double x0, LogDensity&& logf, double width, Rng& rng, int max_steps = 32) {
  const double f0 = logf(x0);
  if (!std::isfinite(f0)) throw FitFailure("slice sampler started outside the support");
  const double level = f0 + std::log(uniform01(rng));
  double left = x0 - width * uniform01(rng);
  double right = left + width;
  int j = static_cast<int>(max_steps * uniform01(rng));
  int k = max_steps - 1 - j;
  while (j-- > 0 && logf(left) > level) left -= width;
  while (k-- > 0 && logf(right) > level) right += width;
  for (int it = 0; it < 200; ++it) {
    const double x1 = left + (right - left) * uniform01(rng);
    if (logf(x1) > level) return x1;
    (x1 < x0 ? left : right) = x1;
  }
  throw FitFailure("slice sampler shrinkage did not terminate");
}

// Slice update of a standard deviation under a half-normal(prior_scale) prior,
// on the log-SD scale. `loglik` is evaluated at the SD.
template <class LogLik>
double update_half_normal_sd(double sd, LogLik&& loglik, double prior_scale, Rng& rng,
                             double width = 1.0) {
  const double inv2s2 = 0.5 / (prior_scale * prior_scale);
  auto target = [&](double u) {
    if (u < -30.0 || u > 10.0) return -std::numeric_limits<double>::infinity();
    const double s = std::exp(u);
    return loglik(s) - s * s * inv2s2 + u;
  };
  return std::exp(slice_sample(std::log(sd), target, width, rng));
}

/// Random-walk Metropolis with a Robbins-Monro scale, adapted only while
/// `adapt` is true.
class AdaptiveMetropolis {
 public:
  explicit AdaptiveMetropolis(double scale = 1.0, double target_rate = 0.44)
      : log_scale_(std::log(scale)), target_(target_rate) {}

  template <class LogDensity>
  double step(double x, LogDensity&& logf, Rng& rng, bool adapt) {
    const double fx = logf(x);
    const double y = x + std::exp(log_scale_) * std_normal(rng);
    const double fy = logf(y);
    const bool accept = std::log(uniform01(rng)) < fy - fx;
    ++proposed_;
    if (accept) ++accepted_;
    if (adapt) {
      ++n_adapt_;
      log_scale_ += ((accept ? 1.0 : 0.0) - target_) / std::sqrt(static_cast<double>(n_adapt_));
    } else {
      ++post_proposed_;
      if (accept) ++post_accepted_;
    }
    return accept ? y : x;
  }

  [[nodiscard]] double scale() const { return std::exp(log_scale_); }
  // Acceptance rate since adaptation stopped (NaN before).
  [[nodiscard]] double acceptance_rate() const {
    return post_proposed_ ? static_cast<double>(post_accepted_) / post_proposed_
                          : std::nan("");
  }

 private:
  double log_scale_;
  double target_;
  long n_adapt_ = 0;
  long proposed_ = 0;
  long accepted_ = 0;
  long post_proposed_ = 0;
  long post_accepted_ = 0;
};

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw FitFailure(std::string("non-finite ") + what);
}

}  // namespace misim::mcmc
