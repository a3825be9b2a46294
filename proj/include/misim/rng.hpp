#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace misim {

// Finalizer from SplitMix64; used both to seed engines and to hash stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ (Blackman & Vigna). Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> s_{};
};

// Purpose of a derived stream. Values are part of the on-disk reproducibility
// contract; never renumber.
enum class StreamRole : std::uint32_t {
  Effects = 1,   // indication/study treatment multipliers
  Study = 2,     // patient simulation, index = study, sub = attempt
  Fit = 3,       // index = component fit id
  Chain = 4,     // index = component fit id, sub = chain
  Pairing = 5,   // draw pairing across component fits, index = model
  Nuisance = 6,  // nuisance-parameter heterogeneity
  Test = 99,
};

/// Identifies one independent random stream. The stream seed is a hash of
/// every field, so streams can be created in any order on any thread.
struct StreamKey {
  std::uint64_t master = 0;
  std::uint64_t scenario = 0;
  std::uint64_t replicate = 0;
  StreamRole role = StreamRole::Test;
  std::uint64_t index = 0;
  std::uint64_t sub = 0;

  [[nodiscard]] StreamKey with(StreamRole r, std::uint64_t i = 0,
                               std::uint64_t s = 0) const noexcept {
    StreamKey k = *this;
    k.role = r;
    k.index = i;
    k.sub = s;
    return k;
  }
};

[[nodiscard]] std::uint64_t stream_seed(const StreamKey& key) noexcept;

[[nodiscard]] inline Rng make_stream(const StreamKey& key) noexcept {
  return Rng(stream_seed(key));
}

[[nodiscard]] inline Rng seed_for(std::uint64_t master, std::uint64_t scenario,
                                  std::uint64_t replicate, StreamRole role,
                                  std::uint64_t index = 0,
                                  std::uint64_t sub = 0) noexcept {
  return make_stream(StreamKey{master, scenario, replicate, role, index, sub});
}

// Uniform on the open interval (0, 1); 53 random bits.
[[nodiscard]] inline double uniform01(Rng& rng) noexcept {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

[[nodiscard]] double std_normal(Rng& rng);
[[nodiscard]] inline double normal(Rng& rng, double mean, double sd) {
  return mean + sd * std_normal(rng);
}
[[nodiscard]] double exponential(Rng& rng, double rate);
[[nodiscard]] double beta(Rng& rng, double a, double b);

}  // namespace misim
