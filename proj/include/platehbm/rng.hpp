#pragma once

#include <array>
#include <cstdint>

namespace phbm {

/// xoshiro256** seeded through splitmix64. Every chain, plate and stage owns
/// its own instance; draws are bit-identical across runs and platforms.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream derived from (seed, stream) without sharing state.
  static Rng stream(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1); never returns 0.
  double uniform_open();
  double uniform(double lo, double hi);
  /// Standard normal via the Marsaglia polar method.
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace phbm
