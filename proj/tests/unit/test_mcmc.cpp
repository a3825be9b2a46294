#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "misim/error.hpp"
#include "misim/mcmc.hpp"
#include "misim/stats.hpp"

using namespace misim;
using namespace misim::mcmc;
using doctest::Approx;

namespace {

// y_i ~ N(mu, sigma^2) with sigma known and mu ~ N(0, prior_sd^2); also
// carries a prior-only SD parameter updated by slice sampling.
class NormalMeanModel final : public Model {
 public:
  NormalMeanModel(std::vector<double> y, double sigma, double prior_sd)
      : y_(std::move(y)), sigma_(sigma), prior_sd_(prior_sd) {}

  const std::vector<ParamInfo>& parameters() const override { return params_; }

  std::unique_ptr<Chain> start(int chain, const ChainConfig& config, Rng&) const override {
    return std::make_unique<C>(*this, config.init_offset(chain) * prior_sd_);
  }

  double posterior_mean() const {
    double s = 0.0;
    for (double v : y_) s += v;
    return normal_posterior(0.0, prior_sd_ * prior_sd_, y_.size() / (sigma_ * sigma_),
                            s / (sigma_ * sigma_))
        .mean;
  }
  double posterior_sd() const {
    return std::sqrt(
        normal_posterior(0.0, prior_sd_ * prior_sd_, y_.size() / (sigma_ * sigma_), 0.0).var);
  }

 private:
  struct C final : Chain {
    C(const NormalMeanModel& m, double init) : m(m), mu(init), s(0.5) {}
    void sweep(Rng& rng, bool) override {
      double sum = 0.0;
      for (double v : m.y_) sum += v;
      const double w = 1.0 / (m.sigma_ * m.sigma_);
      mu = draw(normal_posterior(0.0, m.prior_sd_ * m.prior_sd_, w * m.y_.size(), w * sum), rng);
      s = update_half_normal_sd(s, [](double) { return 0.0; }, 1.0, rng);
    }
    void read(std::span<double> out) const override {
      out[0] = mu;
      out[1] = s;
    }
    const NormalMeanModel& m;
    double mu, s;
  };

  std::vector<double> y_;
  double sigma_;
  double prior_sd_;
  std::vector<ParamInfo> params_{{"mu"}, {"s"}};
};

std::vector<std::span<const double>> spans(const std::vector<std::vector<double>>& v) {
  std::vector<std::span<const double>> out;
  for (const auto& x : v) out.emplace_back(x);
  return out;
}

// Batch-means Monte Carlo standard error.
double mcse(const std::vector<double>& x, int batches = 50) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += x[b * len + i];
    means.push_back(s / len);
  }
  return stats::sd(means) / std::sqrt(static_cast<double>(batches));
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

ChainConfig small_config() {
  ChainConfig c;
  c.burn_in = 500;
  c.samples = 4000;
  return c;
}

}  // namespace

TEST_CASE("conjugate normal mean matches the closed form") {
  const NormalMeanModel model({0.3, -0.1, 0.45, 0.2, 0.05}, 0.4, 2.0);
  const auto draws = run_chains(model, small_config(), {1, 0, 0, StreamRole::Test, 0, 0});
  const auto mu = draws.pooled(draws.index_of("mu"));
  CHECK(std::abs(stats::mean(mu) - model.posterior_mean()) < 3.0 * mcse(mu));
  CHECK(stats::sd(mu) == Approx(model.posterior_sd()).epsilon(0.03));
}

TEST_CASE("without data the posterior is the prior") {
  const NormalMeanModel model({}, 1.0, 2.0);
  const auto draws = run_chains(model, small_config(), {2, 0, 0, StreamRole::Test, 0, 0});
  Rng rng = seed_for(2, 1, 0, StreamRole::Test);
  std::vector<double> prior_mu, prior_s;
  for (int i = 0; i < 12000; ++i) {
    prior_mu.push_back(2.0 * std_normal(rng));
    prior_s.push_back(std::abs(std_normal(rng)));
  }
  const double n = 12000.0;
  const double critical = 1.949 * std::sqrt(2.0 / n);  // alpha = 0.001
  CHECK(ks_statistic(draws.pooled(0), prior_mu) < critical);
  CHECK(ks_statistic(draws.pooled(1), prior_s) < critical);
}

TEST_CASE("identical seeds give identical draws, serial or parallel") {
  const NormalMeanModel model({1.0, 2.0}, 1.0, 10.0);
  auto cfg = small_config();
  const StreamKey key{5, 1, 2, StreamRole::Fit, 3, 0};
  const auto a = run_chains(model, cfg, key);
  const auto b = run_chains(model, cfg, key);
  cfg.parallel_chains = true;
  const auto c = run_chains(model, cfg, key);
  CHECK(a.pooled(0) == b.pooled(0));
  CHECK(a.pooled(0) == c.pooled(0));
  CHECK(a.pooled(1) == c.pooled(1));
  const auto d = run_chains(model, small_config(), key.with(StreamRole::Fit, 4));
  CHECK(a.pooled(0) != d.pooled(0));
}

TEST_CASE("draw storage layout") {
  Draws d({{"a"}, {"b", ParamKind::Derived}}, 2, 3);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i) {
      d.trace(0, c)[i] = 10 * c + i;
      d.trace(1, c)[i] = -(10 * c + i);
    }
  CHECK(d.pooled(0) == std::vector<double>{0, 1, 2, 10, 11, 12});
  CHECK(d.index_of("b") == 1);
  CHECK(d.find("zz") == -1);
  CHECK_THROWS((void)d.index_of("zz"));
  CHECK(d.traces(1)[1][2] == -12);
}

TEST_CASE("chain starts are centred and spread") {
  ChainConfig c;
  CHECK(c.init_offset(0) == -1.0);
  CHECK(c.init_offset(1) == 0.0);
  CHECK(c.init_offset(2) == 1.0);
  c.n_chains = 4;
  c.init_spread = 2.0;
  CHECK(c.init_offset(0) == -3.0);
  CHECK(c.init_offset(3) == 3.0);
}

TEST_CASE("chain profiles") {
  const auto desk = ChainConfig::desk();
  CHECK(desk.n_chains == 3);
  CHECK(desk.burn_in == 5000);
  CHECK(desk.samples == 15000);
  const auto paper = ChainConfig::paper();
  CHECK(paper.burn_in == 50000);
  CHECK(paper.samples == 150000);
  ChainConfig bad;
  bad.samples = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("Gelman-Rubin on hand-computed chains") {
  std::vector<double> c1, c2;
  for (int i = 0; i < 10; ++i) {
    c1.push_back(i);
    c2.push_back(i + 1);
  }
  const std::vector<double> c3{0, 3, 1, 4, 1, 5, 9, 2, 6, 5};
  const std::vector<std::vector<double>> chains{c1, c2, c3};
  CHECK(gelman_rubin(spans(chains)) == Approx(1.002246833196771).epsilon(1e-12));
}

TEST_CASE("Gelman-Rubin edge cases") {
  const std::vector<std::vector<double>> constant(3, std::vector<double>(20, 5.0));
  CHECK(gelman_rubin(spans(constant)) == 1.0);
  std::vector<std::vector<double>> split_const{std::vector<double>(20, 1.0),
                                               std::vector<double>(20, 2.0)};
  CHECK(std::isinf(gelman_rubin(spans(split_const))));

  Rng rng = seed_for(3, 0, 0, StreamRole::Test);
  std::vector<std::vector<double>> far(3), near(3);
  const double centres[] = {0.0, 10.0, -10.0};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 10000; ++i) far[c].push_back(centres[c] + std_normal(rng));
    for (int i = 0; i < 50000; ++i) near[c].push_back(std_normal(rng));
  }
  CHECK(gelman_rubin(spans(far)) > 5.0);
  CHECK(gelman_rubin(spans(near)) < 1.01);
  CHECK(gelman_rubin(spans(near), true) < 1.01);

  const std::vector<std::vector<double>> short_chains(2, std::vector<double>(5, 1.0));
  CHECK_THROWS((void)gelman_rubin(spans(short_chains)));
  const std::vector<std::vector<double>> one(1, std::vector<double>(50, 1.0));
  CHECK_THROWS((void)gelman_rubin(spans(one)));
}

TEST_CASE("split R-hat detects within-chain drift") {
  std::vector<std::vector<double>> drift(2);
  Rng rng = seed_for(4, 0, 0, StreamRole::Test);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 1000; ++i) drift[c].push_back(i / 100.0 + 0.1 * std_normal(rng));
  CHECK(gelman_rubin(spans(drift)) < 1.1);
  CHECK(gelman_rubin(spans(drift), true) > 1.1);
}

TEST_CASE("convergence options") {
  PosteriorSummary s;
  s.params = {{"D", ParamKind::Parameter, 0, 0, 0, 0, 0, 1.0},
              {"tau", ParamKind::Parameter, 0, 0, 0, 0, 0, 1.0},
              {"c[0]", ParamKind::Indicator, 0, 0, 0, 0, 0, 3.0},
              {"pred", ParamKind::Derived, 0, 0, 0, 0, 0, 2.0}};
  const std::vector<std::string> pred{"D"};
  CHECK(check_convergence(s, ConvergenceOption::AllParams, pred));
  CHECK(check_convergence(s, ConvergenceOption::PredictionParams, pred));

  s.params[1].rhat = 1.5;  // nuisance only
  CHECK_FALSE(check_convergence(s, ConvergenceOption::AllParams, pred));
  CHECK(check_convergence(s, ConvergenceOption::PredictionParams, pred));

  s.params[1].rhat = 1.0;
  s.params[0].rhat = 1.2;
  CHECK_FALSE(check_convergence(s, ConvergenceOption::AllParams, pred));
  CHECK_FALSE(check_convergence(s, ConvergenceOption::PredictionParams, pred));

  const std::vector<std::string> missing{"nope"};
  CHECK_FALSE(check_convergence(s, ConvergenceOption::PredictionParams, missing));
  s.params[0].rhat = std::nan("");
  CHECK_FALSE(check_convergence(s, ConvergenceOption::PredictionParams, pred));
}

TEST_CASE("summaries") {
  const NormalMeanModel model({0.0}, 1.0, 1.0);
  const auto draws = run_chains(model, small_config(), {6, 0, 0, StreamRole::Test, 0, 0});
  const auto sum = summarize(draws);
  const auto* mu = sum.find("mu");
  REQUIRE(mu != nullptr);
  CHECK(mu->q025 < mu->q50);
  CHECK(mu->q50 < mu->q975);
  CHECK(mu->rhat < 1.01);
  CHECK(mu->sd == Approx(std::sqrt(0.5)).epsilon(0.05));
}

TEST_CASE("slice sampler leaves a half-normal invariant") {
  Rng rng = seed_for(7, 0, 0, StreamRole::Test);
  const double scale = 0.5;
  double s = 0.3;
  std::vector<double> x;
  for (int i = 0; i < 60000; ++i) {
    s = update_half_normal_sd(s, [](double) { return 0.0; }, scale, rng);
    x.push_back(s);
  }
  CHECK(std::abs(stats::mean(x) - std::sqrt(2.0 / M_PI) * scale) < 3.0 * mcse(x));
  CHECK(*std::min_element(x.begin(), x.end()) > 0.0);
}

TEST_CASE("slice sampler on a bounded density") {
  Rng rng = seed_for(8, 0, 0, StreamRole::Test);
  auto logf = [](double v) {
    return (v > 0.0 && v < 1.0) ? std::log(v) : -std::numeric_limits<double>::infinity();
  };
  double v = 0.5;
  std::vector<double> x;
  for (int i = 0; i < 40000; ++i) {
    v = slice_sample(v, logf, 0.5, rng);
    x.push_back(v);
  }
  CHECK(std::abs(stats::mean(x) - 2.0 / 3.0) < 3.0 * mcse(x));
  CHECK_THROWS_AS((void)slice_sample(2.0, logf, 0.5, rng), FitFailure);
}

TEST_CASE("adaptive Metropolis tunes its scale during burn-in only") {
  Rng rng = seed_for(9, 0, 0, StreamRole::Test);
  AdaptiveMetropolis mh(50.0);
  auto logf = [](double v) { return -0.5 * v * v / 0.04; };
  double v = 0.0;
  for (int i = 0; i < 5000; ++i) v = mh.step(v, logf, rng, true);
  const double tuned = mh.scale();
  CHECK(tuned < 5.0);
  std::vector<double> x;
  for (int i = 0; i < 40000; ++i) {
    v = mh.step(v, logf, rng, false);
    x.push_back(v);
  }
  CHECK(mh.scale() == tuned);
  CHECK(mh.acceptance_rate() >= 0.2);
  CHECK(mh.acceptance_rate() <= 0.6);
  CHECK(stats::sd(x) == Approx(0.2).epsilon(0.05));
}

TEST_CASE("normal posterior arithmetic") {
  const auto p = normal_posterior(0.0, 100.0, 1.0 / 0.01, 0.5 / 0.01);
  CHECK(p.mean == Approx(0.5 * (1.0 / 0.01) / (1.0 / 0.01 + 1.0 / 100.0)));
  CHECK(p.var == Approx(1.0 / (100.0 + 0.01)));
  CHECK_THROWS_AS(require_finite(std::nan(""), "x"), FitFailure);
}
