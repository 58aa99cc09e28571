#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vntpp/data.hpp"
#include "vntpp/hawkes.hpp"
#include "vntpp/model.hpp"
#include "vntpp/predict.hpp"

namespace vntpp {

enum class F1Average { Micro, Macro, Weighted };

struct LabeledPrediction {
  int true_type = 0;
  double true_time = 0.0;
  PredictionResult prediction;
};

struct MetricsReport {
  double f1 = 0.0;
  double time_rmse = 0.0;
  double time_mae = 0.0;
  std::optional<double> intensity_rmse;
  std::optional<double> intensity_mae;
  std::vector<long> diversity;  // correct predictions per type
  long n_events = 0;
  std::string to_json() const;
};

// Micro-averaged multi-class F1 by default; macro/weighted behind the flag.
// normalize_times divides time errors by the reference gap before RMSE/MAE.
MetricsReport compute_metrics(const std::vector<LabeledPrediction>& predictions, int num_types,
                              F1Average average = F1Average::Micro,
                              bool normalize_times = false, double ref_gap = 1.0);

double f1_score(const std::vector<int>& truth, const std::vector<int>& predicted, int num_types,
                F1Average average);

// Per-sequence comparison of a learned intensity against the generating
// spec on a shared uniform grid over [0, T].
struct IntensityError {
  double rmse = 0.0;
  double mae = 0.0;
};
// The learned intensity is supplied per sequence as a per-type function of
// absolute time (the model adapter below builds it for VNTPP).
using SequenceIntensity = std::function<IntensityFn(const EventSequence&)>;
IntensityError intensity_error(const SequenceIntensity& learned, const HawkesSpec& truth,
                               const Dataset& test, int resolution = 500);
// Piecewise intensity of a trained model over a whole sequence: a closure
// that dispatches each t to the governing prediction position.
SequenceIntensity model_sequence_intensity(const VntppModel& model);

// ---- small dense SVD (one-sided Jacobi) ----

struct Svd {
  int rows = 0, cols = 0;
  std::vector<double> singular_values;  // descending, length cols
  std::vector<double> u;                // rows x cols, column-orthonormal
  std::vector<double> v;                // cols x cols, orthogonal
};
Svd svd_jacobi(std::vector<double> a, int rows, int cols);

struct SvdReport {
  std::vector<double> singular_values;
  std::vector<double> projections;  // N x 3 row-major (fewer axes if J < 3)
  std::vector<int> labels;          // next-event type per latent
  int axes = 0;
  std::string to_json() const;
  std::string projections_csv() const;
};

// Collects eval-mode posterior means labeled by the next event type,
// centers them and decomposes; top-3 projections ride along.
SvdReport latent_svd(const VntppModel& model, const Dataset& data,
                     std::size_t max_points = 20000);

// ---- goodness of fit via time rescaling ----

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
  std::size_t n = 0;
};

// Two-sided KS test of the samples against Exp(1) (asymptotic p-value).
KsResult ks_test_exp1(std::vector<double> samples);
double ks_pvalue(double statistic, std::size_t n);

// Compensator increments between consecutive events (from t=0), by the
// model's own integration; increments under the data-generating law are
// Exp(1). Overloads for a trained model and for an analytic spec.
KsResult rescaling_gof(const VntppModel& model, const Dataset& data, int grid_per_interval = 64);
KsResult rescaling_gof(const HawkesSpec& spec, const Dataset& data, int mc_samples = 256,
                       std::uint64_t seed = 13);

}  // namespace vntpp
