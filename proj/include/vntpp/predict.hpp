#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vntpp/data.hpp"
#include "vntpp/hawkes.hpp"
#include "vntpp/model.hpp"

namespace vntpp {

enum class Scheme { RightRiemann, Trapezoid };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct PredictionGrid {
  double t_start = 0.0;  // last event time
  double t_end = 1.0;    // truncation
  int n_points = 1000;
  Scheme scheme = Scheme::RightRiemann;
};

struct PredictionResult {
  double expected_time = 0.0;
  std::vector<double> type_probs;  // renormalized by captured mass
  int predicted_type = 0;          // argmax, ties to the smallest index
  double pdf_mass = 0.0;           // probability captured by the grid
  bool low_mass = false;           // pdf_mass < 0.99 after extensions
};

// Per-type intensity at absolute time t (t greater than the last event).
using IntensityFn = std::function<std::vector<double>(double)>;

// f(t) = lambda(t) exp(-int_{t_start}^t lambda), inner integral discretized
// by the grid scheme.
double time_pdf(const IntensityFn& intensity, double t_start, double t, int n_points,
                Scheme scheme);

// Expected next time, marginal type distribution and captured mass over one
// fixed grid.
PredictionResult integrate_prediction(const IntensityFn& intensity, int num_types,
                                      const PredictionGrid& grid);

// Builds the grid from a reference gap (t_end = t_start + 10 * ref_gap,
// doubled up to 4 times until mass >= 0.999) and integrates.
PredictionResult predict_next(const IntensityFn& intensity, int num_types, double t_start,
                              double ref_gap, int n_points = 1000,
                              Scheme scheme = Scheme::RightRiemann);

// Eq.-17-style diagnostic: type distribution conditioned on a known next
// event time (not used for prediction).
std::vector<double> conditional_type_prob(const IntensityFn& intensity, int num_types, double t);

// Adapters.
IntensityFn neural_intensity(const VntppModel& model, std::vector<double> z, double t_last);
IntensityFn hawkes_intensity(const HawkesSpec& spec, std::vector<Event> history);

}  // namespace vntpp
