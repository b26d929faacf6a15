#pragma once

#include <cstdint>

namespace gasa {

struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
  friend bool operator==(const RngState&, const RngState&) = default;
};

/// Counter-based generator: output n is SplitMix64(seed, n), so the full state
/// is the (seed, counter) pair and streams are reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_{seed, 0} {}
  explicit Rng(RngState state) : state_(state) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; consumes two draws per sample.
  double normal();
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream, deterministic in (seed, stream id).
  Rng fork(std::uint64_t stream) const;

  RngState state() const { return state_; }
  void set_state(RngState s) { state_ = s; }

 private:
  RngState state_;
};

}  // namespace gasa
