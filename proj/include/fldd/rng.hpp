#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fldd {

/// Seeded 64-bit Mersenne Twister with a serializable state.
///
/// Independent substreams are derived from (seed, stream) through seed_seq,
/// so data sampling, latent sampling, and Gumbel noise never share draws.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(engine_); }

  std::vector<std::uint64_t> state() const;
  void set_state(const std::vector<std::uint64_t>& words);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace fldd
