#include "misim/mcmc.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "misim/stats.hpp"

namespace misim::mcmc {

void ChainConfig::validate() const {
  if (n_chains < 1 || burn_in < 0 || samples < 1 || thin < 1)
    throw ConfigError("invalid chain configuration");
}

Draws::Draws(std::vector<ParamInfo> params, int n_chains, int n_iter)
    : params_(std::move(params)),
      n_chains_(n_chains),
      n_iter_(n_iter),
      data_(params_.size() * static_cast<std::size_t>(n_chains) * static_cast<std::size_t>(n_iter)) {}

int Draws::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

int Draws::index_of(std::string_view name) const {
  const int i = find(name);
  if (i < 0) throw std::out_of_range("no parameter named " + std::string(name));
  return i;
}

std::span<const double> Draws::trace(int param, int chain) const {
  const auto off = (static_cast<std::size_t>(param) * n_chains_ + chain) * n_iter_;
  return {data_.data() + off, static_cast<std::size_t>(n_iter_)};
}

std::span<double> Draws::trace(int param, int chain) {
  const auto off = (static_cast<std::size_t>(param) * n_chains_ + chain) * n_iter_;
  return {data_.data() + off, static_cast<std::size_t>(n_iter_)};
}

std::vector<std::span<const double>> Draws::traces(int param) const {
  std::vector<std::span<const double>> out;
  for (int c = 0; c < n_chains_; ++c) out.push_back(trace(param, c));
  return out;
}

std::vector<double> Draws::pooled(int param) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_chains_) * n_iter_);
  for (int c = 0; c < n_chains_; ++c) {
    const auto t = trace(param, c);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

namespace {

void run_one(const Model& model, const ChainConfig& config, const StreamKey& key, int c,
             Draws& draws) {
  Rng rng = make_stream(key.with(StreamRole::Chain, key.index, static_cast<std::uint64_t>(c)));
  auto chain = model.start(c, config, rng);
  for (int it = 0; it < config.burn_in; ++it) chain->sweep(rng, true);
  std::vector<double> row(static_cast<std::size_t>(draws.n_params()));
  for (int it = 0; it < config.samples; ++it) {
    for (int k = 0; k < config.thin; ++k) chain->sweep(rng, false);
    chain->read(row);
    for (int p = 0; p < draws.n_params(); ++p) draws.trace(p, c)[it] = row[p];
  }
}

}  // namespace

Draws run_chains(const Model& model, const ChainConfig& config, const StreamKey& key) {
  config.validate();
  Draws draws(model.parameters(), config.n_chains, config.samples);
  if (!config.parallel_chains || config.n_chains == 1) {
    for (int c = 0; c < config.n_chains; ++c) run_one(model, config, key, c, draws);
    return draws;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.n_chains));
  {
    std::vector<std::jthread> workers;
    for (int c = 0; c < config.n_chains; ++c) {
      workers.emplace_back([&, c] {
        try {
          run_one(model, config, key, c, draws);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return draws;
}

double gelman_rubin(std::span<const std::span<const double>> chains, bool split) {
  std::vector<std::span<const double>> parts;
  for (const auto& c : chains) {
    if (split) {
      const std::size_t half = c.size() / 2;
      parts.push_back(c.first(half));
      parts.push_back(c.subspan(c.size() - half));
    } else {
      parts.push_back(c);
    }
  }
  if (parts.size() < 2) throw std::invalid_argument("gelman_rubin needs at least two chains");
  const std::size_t n = parts.front().size();
  if (n < 10) throw std::invalid_argument("gelman_rubin needs at least 10 draws per chain");
  for (const auto& p : parts)
    if (p.size() != n) throw std::invalid_argument("gelman_rubin: unequal chain lengths");

  std::vector<double> means;
  double within = 0.0;
  for (const auto& p : parts) {
    means.push_back(stats::mean(p));
    within += stats::variance(p);
  }
  within /= static_cast<double>(parts.size());
  const double between_over_n = stats::variance(means);
  if (within <= 0.0) {
    return between_over_n <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  }
  const double nd = static_cast<double>(n);
  const double var_hat = (nd - 1.0) / nd * within + between_over_n;
  return std::sqrt(var_hat / within);
}

const ParamSummary* PosteriorSummary::find(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

PosteriorSummary summarize(const Draws& draws, bool split_rhat) {
  PosteriorSummary out;
  static constexpr double probs[] = {0.025, 0.5, 0.975};
  for (int p = 0; p < draws.n_params(); ++p) {
    ParamSummary s;
    s.name = draws.params()[p].name;
    s.kind = draws.params()[p].kind;
    const auto all = draws.pooled(p);
    s.mean = stats::mean(all);
    s.sd = stats::sd(all);
    const auto q = stats::quantiles(all, probs);
    s.q025 = q[0];
    s.q50 = q[1];
    s.q975 = q[2];
    if (draws.n_chains() >= 2 && draws.n_iter() >= 10) {
      const auto tr = draws.traces(p);
      s.rhat = gelman_rubin(tr, split_rhat);
    } else {
      s.rhat = std::nan("");
    }
    out.params.push_back(std::move(s));
  }
  return out;
}

bool check_convergence(const PosteriorSummary& summary, ConvergenceOption option,
                       std::span<const std::string> prediction_set, double threshold) {
  auto ok = [&](const ParamSummary& s) { return s.rhat < threshold; };
  if (option == ConvergenceOption::AllParams) {
    return std::all_of(summary.params.begin(), summary.params.end(), [&](const auto& s) {
      return s.kind != ParamKind::Parameter || ok(s);
    });
  }
  for (const auto& name : prediction_set) {
    const ParamSummary* s = summary.find(name);
    if (s == nullptr || !ok(*s)) return false;
  }
  return true;
}

}  // namespace misim::mcmc
