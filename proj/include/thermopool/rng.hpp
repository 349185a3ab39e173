#ifndef THERMOPOOL_RNG_HPP
#define THERMOPOOL_RNG_HPP

#include <cstdint>
#include <limits>

namespace thermopool {

/// SplitMix64 stream whose starting state is a hash of (seed, stream,
/// counter). Any (chain, iteration) pair can be reproduced without replaying
/// earlier draws. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

 private:
  std::uint64_t state_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace thermopool

#endif  // THERMOPOOL_RNG_HPP
