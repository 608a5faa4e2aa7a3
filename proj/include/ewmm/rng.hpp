#pragma once

#include <cstdint>

namespace ewmm {

/// Stream identifiers for CounterRng, one per purpose.
enum class RngStream : std::uint64_t {
  quantile_data = 1,
  logistic_data = 2,
  returns_data = 3,
  tail_probes = 4,
  bench_data = 5,
  test = 99,
};

/// Counter-based SplitMix64.
///
/// key     = mix(seed ^ mix(stream + 0x9E3779B97F4A7C15))
/// draw(c) = mix(key + (c + 1) * 0x9E3779B97F4A7C15)
///
/// where mix is the SplitMix64 finalizer (xor-shift 30, multiply
/// 0xBF58476D1CE4E5B9, xor-shift 27, multiply 0x94D049BB133111EB,
/// xor-shift 31). uniform() = (draw >> 11) * 2^-53. normal() uses the
/// Box-Muller cosine branch on two consecutive uniforms u1, u2:
/// sqrt(-2 log(1 - u1)) cos(2 pi u2).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, RngStream stream);
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ewmm
