#include "misim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace misim::stats {

double normal_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double mean(std::span<const double> x) {
  if (x.empty()) return std::nan("");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

double quantile(std::span<const double> x, double p) {
  const double probs[] = {p};
  return quantiles(x, probs).front();
}

// Selection-based type-7 quantiles; probabilities need not be sorted.
std::vector<double> quantiles(std::span<const double> x, std::span<const double> probs) {
  if (x.empty()) throw std::invalid_argument("quantiles: empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::vector<double> out;
  out.reserve(probs.size());
  for (double p : probs) {
    const double h = (static_cast<double>(s.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(lo), s.end());
    const double v_lo = s[lo];
    double v_hi = v_lo;
    if (lo + 1 < s.size())
      v_hi = *std::min_element(s.begin() + static_cast<std::ptrdiff_t>(lo) + 1, s.end());
    out.push_back(v_lo + (h - static_cast<double>(lo)) * (v_hi - v_lo));
  }
  return out;
}

}  // namespace misim::stats
