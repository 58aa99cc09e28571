#pragma once

#include <cstdint>

namespace vntpp {

// Counter-based generator: the value stream is a pure function of
// (seed, stream, counter), so simulation and training are reproducible
// across platforms and independent of call-site threading.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller (no hidden state, portable).
  double normal();
  double exponential(double rate);

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace vntpp
