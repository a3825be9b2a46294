#include "misim/rng.hpp"

#include <boost/random/beta_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

namespace misim {

Rng::Rng(std::uint64_t seed) noexcept {
  std::uint64_t z = seed;
  for (auto& word : s_) {
    z += 0x9e3779b97f4a7c15ULL;
    word = mix64(z);
  }
}

std::uint64_t stream_seed(const StreamKey& key) noexcept {
  std::uint64_t h = mix64(key.master ^ 0x6d6973696d5f31ULL);
  h = mix64(h ^ key.scenario);
  h = mix64(h ^ key.replicate);
  h = mix64(h ^ static_cast<std::uint64_t>(key.role));
  h = mix64(h ^ key.index);
  h = mix64(h ^ key.sub);
  return h;
}

double std_normal(Rng& rng) {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double exponential(Rng& rng, double rate) {
  boost::random::exponential_distribution<double> dist(rate);
  return dist(rng);
}

double beta(Rng& rng, double a, double b) {
  boost::random::beta_distribution<double> dist(a, b);
  return dist(rng);
}

}  // namespace misim
