#include "vntpp/rng.hpp"

#include <cmath>

#include "vntpp/common.hpp"

namespace vntpp {

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(seed ^ splitmix64(stream * 0xda942042e4dd58b5ULL))) {}

std::uint64_t CounterRng::next_u64() {
  return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t CounterRng::uniform_int(std::uint64_t n) {
  if (n == 0) raise(ErrorCode::InvalidArgument, "uniform_int: n must be > 0");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = n * (UINT64_MAX / n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double CounterRng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

double CounterRng::exponential(double rate) {
  if (rate <= 0.0) raise(ErrorCode::InvalidArgument, "exponential: rate must be > 0");
  double u = uniform();
  if (u <= 0.0) u = 0x1.0p-53;
  return -std::log(u) / rate;
}

namespace {
bool g_nonfinite_checks = true;
int g_max_threads = 0;
}  // namespace

bool nonfinite_checks_enabled() { return g_nonfinite_checks; }
void set_nonfinite_checks(bool enabled) { g_nonfinite_checks = enabled; }
int max_threads() { return g_max_threads; }
void set_max_threads(int n) { g_max_threads = n < 0 ? 0 : n; }

}  // namespace vntpp
