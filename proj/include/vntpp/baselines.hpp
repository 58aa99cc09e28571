#pragma once

#include <cstdint>

#include "vntpp/data.hpp"
#include "vntpp/hawkes.hpp"
#include "vntpp/predict.hpp"

namespace vntpp {

struct FitOptions {
  KernelFamily kernel = KernelFamily::Exponential;
  bool fit_beta = true;       // exponential decay rate trained or held fixed
  double fixed_beta = 1.0;
  bool fix_adjacency_zero = false;  // pure Poisson fit
  int max_iterations = 500;
  double learning_rate = 0.01;
  int mc_samples = 20;  // gaussian compensator
  double rel_tol = 1e-6;
  std::uint64_t seed = 1;
};

struct HawkesFit {
  HawkesSpec spec;
  double train_loglik = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Full-batch Adam ascent on the point-process log-likelihood; positivity of
// mu/a (and beta, center, width) enforced by softplus reparameterization.
// The exponential kernel integrates its compensator in closed form, the
// gaussian kernel by Monte Carlo over [0, T].
HawkesFit fit_hawkes(const Dataset& data, const FitOptions& opts);

// Average log-likelihood per sequence of a fixed spec on a dataset (used to
// compare fits on held-out data).
double hawkes_loglik(const HawkesSpec& spec, const Dataset& data, int mc_samples = 200,
                     std::uint64_t seed = 9);

PredictionResult hawkes_predict(const HawkesFit& fit, const std::vector<Event>& history,
                                double t_last, double ref_gap, int n_points = 1000,
                                Scheme scheme = Scheme::RightRiemann);

}  // namespace vntpp
