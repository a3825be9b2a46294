#include <algorithm>
#include <cmath>
#include <limits>

#include "misim/models.hpp"

namespace misim::models {

namespace {

using mcmc::ParamInfo;
using mcmc::ParamKind;

struct Study {
  int indication;
  double y_pfs, s_pfs;
  bool has_os;
  double y_os, s_os;
};

// Bivariate normal N(mean, prec^-1) draw from a 2x2 precision.
void draw_bivariate(const double prec[3], const double rhs[2], double out[2], Rng& rng) {
  // prec = [a b; b c]
  const double a = prec[0], b = prec[1], c = prec[2];
  const double det = a * c - b * b;
  if (!(det > 0.0)) throw FitFailure("singular regression precision");
  const double cov00 = c / det, cov01 = -b / det, cov11 = a / det;
  const double m0 = cov00 * rhs[0] + cov01 * rhs[1];
  const double m1 = cov01 * rhs[0] + cov11 * rhs[1];
  const double l00 = std::sqrt(cov00);
  const double l10 = cov01 / l00;
  const double l11 = std::sqrt(std::max(0.0, cov11 - l10 * l10));
  const double z0 = std_normal(rng), z1 = std_normal(rng);
  out[0] = m0 + l00 * z0;
  out[1] = m1 + l10 * z0 + l11 * z1;
}

class BivariateModel final : public mcmc::Model {
 public:
  BivariateModel(const BivariateData& data, Family family, const Priors& priors)
      : family_(family), priors_(priors), n_ind_(data.n_indications), target_(data.target) {
    for (const auto& o : data.obs) {
      Study s{o.indication, o.y_pfs, o.se_pfs, false, 0.0, 1.0};
      if (o.y_os && o.se_os) {
        s.has_os = true;
        s.y_os = *o.y_os;
        s.s_os = *o.se_os;
      }
      studies_.push_back(s);
    }
    auto idx = [](const char* base, int j) { return std::string(base) + "[" + std::to_string(j) + "]"; };
    params_.push_back({"rho"});
    if (family_ == Family::BiCP) {
      params_.push_back({"gamma0"});
      params_.push_back({"gamma1"});
      params_.push_back({"psi"});
    } else {
      for (const char* n : {"beta0", "beta1", "xi0", "xi1"}) params_.push_back({n});
      for (int j = 0; j < n_ind_; ++j) params_.push_back({idx("gamma0", j)});
      for (int j = 0; j < n_ind_; ++j) params_.push_back({idx("gamma1", j)});
      for (int j = 0; j < n_ind_; ++j) params_.push_back({idx("psi", j)});
      params_.push_back({"gamma0_pred", ParamKind::Derived});
      params_.push_back({"gamma1_pred", ParamKind::Derived});
    }
  }

  const std::vector<ParamInfo>& parameters() const override { return params_; }
  std::unique_ptr<mcmc::Chain> start(int chain, const mcmc::ChainConfig& config,
                                     Rng& rng) const override;

  Family family_;
  Priors priors_;
  int n_ind_;
  int target_;
  std::vector<Study> studies_;
  std::vector<ParamInfo> params_;
};

class BivariateChain final : public mcmc::Chain {
 public:
  BivariateChain(const BivariateModel& model, int chain, const mcmc::ChainConfig& config)
      : m_(model), rho_step_(0.5) {
    const double k = config.init_offset(chain);
    const double spread = 0.1 * std::min(10.0, m_.priors_.location_sd);
    const double sd_init = std::max(0.02, m_.priors_.scale_sd * (0.7979 + 0.6028 * k));
    const int J = m_.n_ind_;
    d_pfs_.resize(m_.studies_.size());
    for (std::size_t i = 0; i < d_pfs_.size(); ++i) d_pfs_[i] = m_.studies_[i].y_pfs;
    rho_ = std::clamp(0.5 + 0.2 * k, 0.05, 0.95);
    g0_.assign(static_cast<std::size_t>(J), k * spread);
    g1_.assign(static_cast<std::size_t>(J), k * spread);
    psi_.assign(static_cast<std::size_t>(J), sd_init);
    b0_ = b1_ = k * spread;
    xi0_ = xi1_ = sd_init;
  }

  void sweep(Rng& rng, bool adapt) override {
    update_d_pfs(rng);
    update_gamma(rng);
    update_psi(rng);
    update_rho(rng, adapt);
    if (m_.family_ == Family::BiRP) {
      update_hyper(rng);
      g0_pred_ = normal(rng, b0_, xi0_);
      g1_pred_ = normal(rng, b1_, xi1_);
    }
    mcmc::require_finite(rho_ + g0_[0] + g1_[0] + psi_[0], "bivariate state");
  }

  void read(std::span<double> out) const override {
    std::size_t i = 0;
    out[i++] = rho_;
    if (m_.family_ == Family::BiCP) {
      out[i++] = g0_[0];
      out[i++] = g1_[0];
      out[i++] = psi_[0];
      return;
    }
    out[i++] = b0_;
    out[i++] = b1_;
    out[i++] = xi0_;
    out[i++] = xi1_;
    for (double v : g0_) out[i++] = v;
    for (double v : g1_) out[i++] = v;
    for (double v : psi_) out[i++] = v;
    out[i++] = g0_pred_;
    out[i++] = g1_pred_;
  }

  [[nodiscard]] double rho_acceptance() const { return rho_step_.acceptance_rate(); }

 private:
  const BivariateModel& m_;
  std::vector<double> d_pfs_;
  double rho_ = 0.5;
  // Indexed by indication; Bi-CP keeps its common values in every slot.
  std::vector<double> g0_, g1_, psi_;
  double b0_ = 0.0, b1_ = 0.0, xi0_ = 0.5, xi1_ = 0.5;
  double g0_pred_ = 0.0, g1_pred_ = 0.0;
  mcmc::AdaptiveMetropolis rho_step_;

  [[nodiscard]] bool common() const { return m_.family_ == Family::BiCP; }

  // Conditional of Y_OS given Y_PFS: mean offset and variance.
  [[nodiscard]] double cond_var(const Study& s, double rho, double psi) const {
    return s.s_os * s.s_os * (1.0 - rho * rho) + psi * psi;
  }
  [[nodiscard]] double cond_resid(const Study& s, double d_pfs, double rho, int j) const {
    const double mean = g0_[j] + g1_[j] * d_pfs + rho * s.s_os / s.s_pfs * (s.y_pfs - d_pfs);
    return s.y_os - mean;
  }

  void update_d_pfs(Rng& rng) {
    const double v0 = m_.priors_.location_sd * m_.priors_.location_sd;
    for (std::size_t i = 0; i < d_pfs_.size(); ++i) {
      const Study& s = m_.studies_[i];
      double w = 1.0 / (s.s_pfs * s.s_pfs);
      double wy = s.y_pfs * w;
      if (s.has_os) {
        const int j = s.indication;
        const double ratio = rho_ * s.s_os / s.s_pfs;
        const double coef = g1_[j] - ratio;
        const double r = s.y_os - g0_[j] - ratio * s.y_pfs;
        const double v = cond_var(s, rho_, psi_[j]);
        w += coef * coef / v;
        wy += coef * r / v;
      }
      d_pfs_[i] = mcmc::draw(mcmc::normal_posterior(0.0, v0, w, wy), rng);
    }
  }

  // Regression of the OS residual on (1, d_pfs) with known variances.
  void accumulate(int j_filter, double prec[3], double rhs[2]) const {
    for (std::size_t i = 0; i < d_pfs_.size(); ++i) {
      const Study& s = m_.studies_[i];
      if (!s.has_os || (j_filter >= 0 && s.indication != j_filter)) continue;
      const double ratio = rho_ * s.s_os / s.s_pfs;
      const double r = s.y_os - ratio * (s.y_pfs - d_pfs_[i]);
      const double x = d_pfs_[i];
      const double w = 1.0 / cond_var(s, rho_, psi_[s.indication]);
      prec[0] += w;
      prec[1] += w * x;
      prec[2] += w * x * x;
      rhs[0] += w * r;
      rhs[1] += w * x * r;
    }
  }

  void update_gamma(Rng& rng) {
    double out[2];
    if (common()) {
      const double p0 = 1.0 / (m_.priors_.location_sd * m_.priors_.location_sd);
      double prec[3] = {p0, 0.0, p0};
      double rhs[2] = {0.0, 0.0};
      accumulate(-1, prec, rhs);
      draw_bivariate(prec, rhs, out, rng);
      std::fill(g0_.begin(), g0_.end(), out[0]);
      std::fill(g1_.begin(), g1_.end(), out[1]);
      return;
    }
    const double p0 = 1.0 / (xi0_ * xi0_), p1 = 1.0 / (xi1_ * xi1_);
    for (int j = 0; j < m_.n_ind_; ++j) {
      double prec[3] = {p0, 0.0, p1};
      double rhs[2] = {b0_ * p0, b1_ * p1};
      accumulate(j, prec, rhs);
      draw_bivariate(prec, rhs, out, rng);
      g0_[j] = out[0];
      g1_[j] = out[1];
    }
  }

  double psi_loglik(int j_filter, double psi) const {
    double ll = 0.0;
    for (std::size_t i = 0; i < d_pfs_.size(); ++i) {
      const Study& s = m_.studies_[i];
      if (!s.has_os || (j_filter >= 0 && s.indication != j_filter)) continue;
      const double v = cond_var(s, rho_, psi);
      const double r = cond_resid(s, d_pfs_[i], rho_, s.indication);
      ll -= 0.5 * (std::log(v) + r * r / v);
    }
    return ll;
  }

  void update_psi(Rng& rng) {
    if (common()) {
      const double v = mcmc::update_half_normal_sd(
          psi_[0], [&](double p) { return psi_loglik(-1, p); }, m_.priors_.scale_sd, rng);
      std::fill(psi_.begin(), psi_.end(), v);
      return;
    }
    for (int j = 0; j < m_.n_ind_; ++j) {
      psi_[j] = mcmc::update_half_normal_sd(
          psi_[j], [&](double p) { return psi_loglik(j, p); }, m_.priors_.psi_scale, rng);
    }
  }

  void update_rho(Rng& rng, bool adapt) {
    auto target = [&](double u) {
      const double r = 1.0 / (1.0 + std::exp(-u));
      if (!(r > 0.0 && r < 1.0)) return -std::numeric_limits<double>::infinity();
      double ll = std::log(r) + std::log1p(-r);
      for (std::size_t i = 0; i < d_pfs_.size(); ++i) {
        const Study& s = m_.studies_[i];
        if (!s.has_os) continue;
        const double v = cond_var(s, r, psi_[s.indication]);
        const double e = cond_resid(s, d_pfs_[i], r, s.indication);
        ll -= 0.5 * (std::log(v) + e * e / v);
      }
      return ll;
    };
    const double u = std::log(rho_ / (1.0 - rho_));
    const double next = rho_step_.step(u, target, rng, adapt);
    rho_ = 1.0 / (1.0 + std::exp(-next));
  }

  void update_hyper(Rng& rng) {
    const double v0 = m_.priors_.location_sd * m_.priors_.location_sd;
    const double J = m_.n_ind_;
    auto update_mean = [&](const std::vector<double>& g, double xi) {
      double sum = 0.0;
      for (double v : g) sum += v;
      return mcmc::draw(mcmc::normal_posterior(0.0, v0, J / (xi * xi), sum / (xi * xi)), rng);
    };
    b0_ = update_mean(g0_, xi0_);
    b1_ = update_mean(g1_, xi1_);
    auto sd_ll = [](const std::vector<double>& g, double mean) {
      return [&g, mean](double xi) {
        double s = 0.0;
        for (double v : g) s -= std::log(xi) + 0.5 * (v - mean) * (v - mean) / (xi * xi);
        return s;
      };
    };
    xi0_ = mcmc::update_half_normal_sd(xi0_, sd_ll(g0_, b0_), m_.priors_.scale_sd, rng);
    xi1_ = mcmc::update_half_normal_sd(xi1_, sd_ll(g1_, b1_), m_.priors_.scale_sd, rng);
  }
};

std::unique_ptr<mcmc::Chain> BivariateModel::start(int chain, const mcmc::ChainConfig& config,
                                                   Rng& /*rng*/) const {
  return std::make_unique<BivariateChain>(*this, chain, config);
}

}  // namespace

std::unique_ptr<mcmc::Model> make_bivariate_model(const BivariateData& data, Family family,
                                                  const Priors& priors) {
  if (family != Family::BiCP && family != Family::BiRP)
    throw std::invalid_argument("make_bivariate_model: not a bivariate family");
  for (const auto& o : data.obs)
    if (o.indication < 0 || o.indication >= data.n_indications || !(o.se_pfs > 0.0))
      throw std::invalid_argument("make_bivariate_model: invalid observation");
  return std::make_unique<BivariateModel>(data, family, priors);
}

}  // namespace misim::models
