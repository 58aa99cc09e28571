#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vntpp/data.hpp"

namespace vntpp {

enum class KernelFamily { Exponential, Gaussian };

struct Kernel {
  KernelFamily family = KernelFamily::Exponential;
  double beta = 1.0;    // exponential decay rate
  double center = 0.0;  // gaussian
  double width = 1.0;   // gaussian

  // Normalized time-decay density f(s), s >= 0.
  double density(double s) const;
};

// Ground-truth generative model: lambda_k(t) = mu_k + sum a[k][k'] f(t - t').
struct HawkesSpec {
  int num_types = 1;
  std::vector<double> mu;              // K
  std::vector<double> adjacency;       // K x K row-major, a[k][k'] = strength of k' -> k
  Kernel kernel;
  double default_horizon = 0.0;        // optional, carried by spec files

  double a(int k, int src) const { return adjacency[static_cast<std::size_t>(k) * num_types + src]; }
  void validate() const;
  // True when the conservative branching-ratio check passes (largest row sum
  // of the kernel-mass matrix < 1). Callers emit a StabilityWarning otherwise.
  bool stable() const;

  static HawkesSpec from_json(const std::string& text);
  static HawkesSpec load(const std::string& path);
  std::string to_json() const;
};

struct IntensityTrace {
  std::vector<double> grid;
  std::vector<std::vector<double>> values;  // K rows, one per type
  std::string to_csv() const;
};

// lambda(t) for every type given the history events strictly before t
// (events exactly at t are excluded: intensities are left-limits at event
// times and right-continuous after). Throws TimeOrder if t precedes history.
std::vector<double> true_intensity(const HawkesSpec& spec,
                                   const std::vector<Event>& history,
                                   double t);

struct SimulateOptions {
  std::size_t max_events = 1000000;  // ExplosionGuard cap
};

// Ogata thinning; exact for the exponential kernel (monotone-decaying bound
// refreshed after every event/rejection), windowed sub-grid bound for the
// gaussian kernel. Deterministic given seed.
EventSequence simulate(const HawkesSpec& spec, double horizon, std::uint64_t seed,
                       const SimulateOptions& opts = {});

Dataset simulate_dataset(const HawkesSpec& spec, std::size_t n_sequences, double horizon,
                         std::uint64_t seed, const SimulateOptions& opts = {});

// Exact antiderivative of sum_k lambda_k over [t0, t1] (exponential kernel
// only; throws UnsupportedKernel for gaussian).
double compensator_closed_form(const HawkesSpec& spec, const EventSequence& seq,
                               double t0, double t1);

IntensityTrace intensity_trace(const HawkesSpec& spec, const EventSequence& seq, int resolution);

}  // namespace vntpp
