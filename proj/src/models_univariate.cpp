#include <algorithm>
#include <cmath>
#include <limits>

#include "misim/models.hpp"

namespace misim::models {

namespace {

using mcmc::ParamInfo;
using mcmc::ParamKind;

constexpr double kHalfNormalMeanFactor = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kHalfNormalSdFactor = 0.6028102749890869;    // sqrt(1 - 2/pi)

struct Group {
  std::vector<double> y;
  std::vector<double> s2;
  [[nodiscard]] bool empty() const { return y.empty(); }
};

struct Moments {
  double w = 0.0;   // sum of precisions
  double wy = 0.0;  // precision-weighted sum of y
};

Moments moments(const Group& g, double tau) {
  Moments m;
  const double t2 = tau * tau;
  for (std::size_t i = 0; i < g.y.size(); ++i) {
    const double w = 1.0 / (g.s2[i] + t2);
    m.w += w;
    m.wy += w * g.y[i];
  }
  return m;
}

// log p(y_g | tau, D) with y_i ~ N(D, s_i^2 + tau^2), constants dropped.
double loglik_given_mean(const Group& g, double tau, double mean) {
  const double t2 = tau * tau;
  double ll = 0.0;
  for (std::size_t i = 0; i < g.y.size(); ++i) {
    const double v = g.s2[i] + t2;
    const double r = g.y[i] - mean;
    ll -= 0.5 * (std::log(v) + r * r / v);
  }
  return ll;
}

// log p(y_g | tau) with the group mean D ~ N(mean, between) integrated out:
// y_g ~ N(mean 1, diag(v) + between 11'), constants dropped.
double loglik_marginal(const Group& g, double tau, double mean, double between) {
  const double t2 = tau * tau;
  double log_det = 0.0, w_sum = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < g.y.size(); ++i) {
    const double v = g.s2[i] + t2;
    const double w = 1.0 / v;
    const double r = g.y[i] - mean;
    log_det += std::log(v);
    w_sum += w;
    s1 += w * r;
    s2 += w * r * r;
  }
  const double denom = 1.0 + between * w_sum;
  return -0.5 * (log_det + std::log(denom) + s2 - between * s1 * s1 / denom);
}

bool draw_indicator(double log_w1, double log_w0, Rng& rng) {
  if (log_w1 == -std::numeric_limits<double>::infinity()) return false;
  if (log_w0 == -std::numeric_limits<double>::infinity()) return true;
  const double p1 = 1.0 / (1.0 + std::exp(log_w0 - log_w1));
  return uniform01(rng) < p1;
}

double half_normal_draw(double scale, Rng& rng) { return std::abs(scale * std_normal(rng)); }

class UnivariateModel final : public mcmc::Model {
 public:
  UnivariateModel(const EndpointData& data, const UnivariateSpec& spec)
      : family_(spec.family),
        tau_mode_(spec.tau),
        priors_(spec.priors),
        n_ind_(data.n_indications),
        target_(data.target),
        target_has_data_(data.has_data(data.target)),
        groups_(static_cast<std::size_t>(data.n_indications)) {
    for (const auto& o : data.obs) {
      groups_.at(static_cast<std::size_t>(o.indication)).y.push_back(o.y);
      groups_[o.indication].s2.push_back(o.se * o.se);
      pooled_.y.push_back(o.y);
      pooled_.s2.push_back(o.se * o.se);
    }
    if (!pooled_.empty()) {
      const Moments m = moments(pooled_, 0.0);
      centre_ = m.wy / m.w;
    }
    build_layout();
  }

  const std::vector<ParamInfo>& parameters() const override { return params_; }
  std::unique_ptr<mcmc::Chain> start(int chain, const mcmc::ChainConfig& config,
                                     Rng& rng) const override;

  Family family_;
  TauMode tau_mode_;
  Priors priors_;
  int n_ind_;
  int target_;
  bool target_has_data_;
  std::vector<Group> groups_;
  Group pooled_;
  double centre_ = 0.0;
  std::vector<ParamInfo> params_;

  [[nodiscard]] bool common_effect() const {
    return family_ == Family::CP || family_ == Family::MCIP;
  }
  [[nodiscard]] bool indication_effects() const { return family_ != Family::CP; }
  [[nodiscard]] bool exchangeable() const {
    return family_ == Family::RP || family_ == Family::MRIP;
  }
  [[nodiscard]] bool mixture() const {
    return family_ == Family::MCIP || family_ == Family::MRIP;
  }
  [[nodiscard]] double location_var() const {
    return priors_.location_sd * priors_.location_sd;
  }

 private:
  void build_layout() {
    auto idx = [](const char* base, int j) { return std::string(base) + "[" + std::to_string(j) + "]"; };
    if (common_effect()) params_.push_back({"D"});
    if (indication_effects())
      for (int j = 0; j < n_ind_; ++j) params_.push_back({idx("D", j)});
    if (exchangeable()) {
      params_.push_back({"m_d"});
      params_.push_back({"eps_d"});
    }
    if (mixture()) {
      for (int j = 0; j < n_ind_; ++j) params_.push_back({idx("c", j), ParamKind::Indicator});
      params_.push_back({"p"});
    }
    if (tau_mode_ == TauMode::Common)
      params_.push_back({"tau"});
    else
      for (int j = 0; j < n_ind_; ++j) params_.push_back({idx("tau", j)});
    params_.push_back({"pred", ParamKind::Derived});
  }
};

class UnivariateChain final : public mcmc::Chain {
 public:
  UnivariateChain(const UnivariateModel& model, int chain, const mcmc::ChainConfig& config)
      : m_(model) {
    const int J = m_.n_ind_;
    const double k = config.init_offset(chain);
    // Starts straddle the pooled estimate; a vague prior must not push
    // them orders of magnitude away from the data.
    const double spread = std::min(1.0, m_.priors_.location_sd);
    const double scale = m_.priors_.scale_sd;
    const double sd_init =
        std::max(0.02, scale * (kHalfNormalMeanFactor + k * kHalfNormalSdFactor));
    const double loc_init = m_.centre_ + k * spread;

    tau_.assign(static_cast<std::size_t>(J), m_.priors_.fixed_tau.value_or(sd_init));
    d_.assign(static_cast<std::size_t>(J), loc_init);
    d_shared_ = d_;
    d_ind_ = d_;
    common_ = loc_init;
    mean_d_ = loc_init;
    eps_ = m_.priors_.fixed_eps.value_or(sd_init);
    c_.assign(static_cast<std::size_t>(J), 1);
    p_ = m_.priors_.fixed_p.value_or(std::clamp(0.5 + 0.2887 * k, 0.05, 0.95));
    pred_ = loc_init;
  }

  void sweep(Rng& rng, bool /*adapt*/) override {
    switch (m_.family_) {
      case Family::IP: sweep_ip(rng); break;
      case Family::CP: sweep_cp(rng); break;
      case Family::RP: sweep_rp(rng); break;
      case Family::MCIP: sweep_mcip(rng); break;
      case Family::MRIP: sweep_mrip(rng); break;
      default: throw std::logic_error("not a univariate family");
    }
    mcmc::require_finite(pred_, "prediction");
  }

  void read(std::span<double> out) const override {
    std::size_t i = 0;
    const int J = m_.n_ind_;
    if (m_.common_effect()) out[i++] = common_;
    if (m_.indication_effects())
      for (int j = 0; j < J; ++j) out[i++] = active(j);
    if (m_.exchangeable()) {
      out[i++] = mean_d_;
      out[i++] = eps_;
    }
    if (m_.mixture()) {
      for (int j = 0; j < J; ++j) out[i++] = c_[j];
      out[i++] = p_;
    }
    if (m_.tau_mode_ == TauMode::Common)
      out[i++] = tau_[0];
    else
      for (int j = 0; j < J; ++j) out[i++] = tau_[j];
    out[i++] = pred_;
  }

 private:
  const UnivariateModel& m_;
  std::vector<double> tau_;     // per indication; all equal under a common tau
  std::vector<double> d_;       // IP/RP indication effects
  std::vector<double> d_shared_;  // mixture shared-branch effects (MRIP)
  std::vector<double> d_ind_;     // mixture independent-branch effects
  std::vector<int> c_;
  double common_ = 0.0;
  double mean_d_ = 0.0;
  double eps_ = 0.0;
  double p_ = 0.5;
  double pred_ = 0.0;

  [[nodiscard]] double active(int j) const {
    switch (m_.family_) {
      case Family::MCIP: return c_[j] ? common_ : d_ind_[j];
      case Family::MRIP: return c_[j] ? d_shared_[j] : d_ind_[j];
      default: return d_[j];
    }
  }

  [[nodiscard]] const Group& group(int j) const { return m_.groups_[static_cast<std::size_t>(j)]; }

  void set_common_tau(double t) { std::fill(tau_.begin(), tau_.end(), t); }

  // Updates tau (common or per indication). `group_ll(j, tau)` is the log
  // likelihood contribution of indication j at that tau.
  template <class GroupLogLik>
  void update_tau(Rng& rng, GroupLogLik&& group_ll) {
    if (m_.priors_.fixed_tau) return;
    const double scale = m_.priors_.scale_sd;
    if (m_.tau_mode_ == TauMode::Common) {
      auto ll = [&](double t) {
        double s = 0.0;
        for (int j = 0; j < m_.n_ind_; ++j)
          if (!group(j).empty()) s += group_ll(j, t);
        return s;
      };
      set_common_tau(mcmc::update_half_normal_sd(tau_[0], ll, scale, rng));
      return;
    }
    for (int j = 0; j < m_.n_ind_; ++j) {
      if (group(j).empty()) {
        tau_[j] = half_normal_draw(scale, rng);
        continue;
      }
      tau_[j] = mcmc::update_half_normal_sd(
          tau_[j], [&](double t) { return group_ll(j, t); }, scale, rng);
    }
  }

  void update_mean_d(Rng& rng, const std::vector<double>& effects) {
    double sum = 0.0;
    for (double v : effects) sum += v;
    const double e2 = eps_ * eps_;
    mean_d_ = mcmc::draw(mcmc::normal_posterior(0.0, m_.location_var(),
                                                static_cast<double>(effects.size()) / e2,
                                                sum / e2),
                         rng);
  }

  void sweep_ip(Rng& rng) {
    const double v0 = m_.location_var();
    update_tau(rng, [&](int j, double t) { return loglik_marginal(group(j), t, 0.0, v0); });
    for (int j = 0; j < m_.n_ind_; ++j) {
      const Moments mo = moments(group(j), tau_[j]);
      d_[j] = mcmc::draw(mcmc::normal_posterior(0.0, v0, mo.w, mo.wy), rng);
    }
    pred_ = d_[m_.target_];
  }

  void sweep_cp(Rng& rng) {
    const double v0 = m_.location_var();
    if (!m_.priors_.fixed_tau) {
      if (m_.tau_mode_ == TauMode::Common) {
        set_common_tau(mcmc::update_half_normal_sd(
            tau_[0], [&](double t) { return loglik_marginal(m_.pooled_, t, 0.0, v0); },
            m_.priors_.scale_sd, rng));
      } else {
        update_tau(rng, [&](int j, double t) { return loglik_given_mean(group(j), t, common_); });
      }
    }
    Moments total;
    for (int j = 0; j < m_.n_ind_; ++j) {
      const Moments mo = moments(group(j), tau_[j]);
      total.w += mo.w;
      total.wy += mo.wy;
    }
    common_ = mcmc::draw(mcmc::normal_posterior(0.0, v0, total.w, total.wy), rng);
    pred_ = common_;
  }

  void update_eps_marginal(Rng& rng) {
    if (m_.priors_.fixed_eps) return;
    // Per-indication sufficient statistics at the current tau and m_d.
    struct Stat {
      double w, s1, s2;
    };
    std::vector<Stat> st;
    for (int j = 0; j < m_.n_ind_; ++j) {
      const Group& g = group(j);
      if (g.empty()) continue;
      Stat s{0.0, 0.0, 0.0};
      const double t2 = tau_[j] * tau_[j];
      for (std::size_t i = 0; i < g.y.size(); ++i) {
        const double w = 1.0 / (g.s2[i] + t2);
        const double r = g.y[i] - mean_d_;
        s.w += w;
        s.s1 += w * r;
        s.s2 += w * r * r;
      }
      st.push_back(s);
    }
    auto ll = [&](double e) {
      const double e2 = e * e;
      double out = 0.0;
      for (const auto& s : st) {
        const double denom = 1.0 + e2 * s.w;
        out -= 0.5 * (std::log(denom) - e2 * s.s1 * s.s1 / denom);
      }
      return out;
    };
    eps_ = mcmc::update_half_normal_sd(eps_, ll, m_.priors_.scale_sd, rng);
  }

  void sweep_rp(Rng& rng) {
    update_tau(rng, [&](int j, double t) {
      return loglik_marginal(group(j), t, mean_d_, eps_ * eps_);
    });
    update_eps_marginal(rng);
    const double e2 = eps_ * eps_;
    for (int j = 0; j < m_.n_ind_; ++j) {
      const Moments mo = moments(group(j), tau_[j]);
      d_[j] = mcmc::draw(mcmc::normal_posterior(mean_d_, e2, mo.w, mo.wy), rng);
    }
    update_mean_d(rng, d_);
    pred_ = m_.target_has_data_ ? d_[m_.target_] : normal(rng, mean_d_, eps_);
  }

  [[nodiscard]] double log_p(bool shared) const {
    const double p = shared ? p_ : 1.0 - p_;
    return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  }

  void update_p(Rng& rng) {
    if (m_.priors_.fixed_p) return;
    int shared = 0;
    for (int v : c_) shared += v;
    p_ = beta(rng, 1.0 + shared, 1.0 + (m_.n_ind_ - shared));
  }

  void sweep_mcip(Rng& rng) {
    const double v0 = m_.location_var();
    update_tau(rng, [&](int j, double t) { return loglik_given_mean(group(j), t, active(j)); });
    Moments shared;
    for (int j = 0; j < m_.n_ind_; ++j) {
      const Group& g = group(j);
      const double l1 = log_p(true) + loglik_given_mean(g, tau_[j], common_);
      const double l0 = log_p(false) + loglik_marginal(g, tau_[j], 0.0, v0);
      c_[j] = draw_indicator(l1, l0, rng) ? 1 : 0;
      const Moments mo = moments(g, tau_[j]);
      if (c_[j]) {
        shared.w += mo.w;
        shared.wy += mo.wy;
        d_ind_[j] = normal(rng, 0.0, m_.priors_.location_sd);
      } else {
        d_ind_[j] = mcmc::draw(mcmc::normal_posterior(0.0, v0, mo.w, mo.wy), rng);
      }
    }
    common_ = mcmc::draw(mcmc::normal_posterior(0.0, v0, shared.w, shared.wy), rng);
    update_p(rng);
    pred_ = common_;
  }

  void sweep_mrip(Rng& rng) {
    const double v0 = m_.location_var();
    update_tau(rng, [&](int j, double t) { return loglik_given_mean(group(j), t, active(j)); });
    const double e2 = eps_ * eps_;
    for (int j = 0; j < m_.n_ind_; ++j) {
      const Group& g = group(j);
      const double l1 = log_p(true) + loglik_marginal(g, tau_[j], mean_d_, e2);
      const double l0 = log_p(false) + loglik_marginal(g, tau_[j], 0.0, v0);
      c_[j] = draw_indicator(l1, l0, rng) ? 1 : 0;
      const Moments mo = moments(g, tau_[j]);
      if (c_[j]) {
        d_shared_[j] = mcmc::draw(mcmc::normal_posterior(mean_d_, e2, mo.w, mo.wy), rng);
        d_ind_[j] = normal(rng, 0.0, m_.priors_.location_sd);
      } else {
        d_shared_[j] = normal(rng, mean_d_, eps_);
        d_ind_[j] = mcmc::draw(mcmc::normal_posterior(0.0, v0, mo.w, mo.wy), rng);
      }
    }
    update_mean_d(rng, d_shared_);
    if (!m_.priors_.fixed_eps) {
      auto ll = [&](double e) {
        double s = 0.0;
        for (double v : d_shared_) s -= std::log(e) + 0.5 * (v - mean_d_) * (v - mean_d_) / (e * e);
        return s;
      };
      eps_ = mcmc::update_half_normal_sd(eps_, ll, m_.priors_.scale_sd, rng);
    }
    update_p(rng);
    pred_ = m_.target_has_data_ ? active(m_.target_) : normal(rng, mean_d_, eps_);
  }
};

std::unique_ptr<mcmc::Chain> UnivariateModel::start(int chain, const mcmc::ChainConfig& config,
                                                    Rng& /*rng*/) const {
  return std::make_unique<UnivariateChain>(*this, chain, config);
}

}  // namespace

std::unique_ptr<mcmc::Model> make_univariate_model(const EndpointData& data,
                                                   const UnivariateSpec& spec) {
  switch (spec.family) {
    case Family::IP:
    case Family::CP:
    case Family::RP:
    case Family::MCIP:
    case Family::MRIP: break;
    default: throw std::invalid_argument("make_univariate_model: bivariate family");
  }
  for (const auto& o : data.obs)
    if (o.indication < 0 || o.indication >= data.n_indications || !(o.se > 0.0))
      throw std::invalid_argument("make_univariate_model: invalid observation");
  return std::make_unique<UnivariateModel>(data, spec);
}

}  // namespace misim::models
