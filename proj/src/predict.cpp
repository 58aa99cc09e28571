#include "vntpp/predict.hpp"

#include <algorithm>
#include <cmath>

#include "vntpp/common.hpp"

namespace vntpp {

std::string scheme_name(Scheme s) {
  return s == Scheme::RightRiemann ? "right_riemann" : "trapezoid";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "right_riemann") return Scheme::RightRiemann;
  if (name == "trapezoid") return Scheme::Trapezoid;
  raise(ErrorCode::InvalidArgument, "unknown integration scheme: " + name);
}

namespace {

struct GridEval {
  std::vector<double> t;                    // n+1 points including t_start
  std::vector<double> lambda_total;         // per point
  std::vector<std::vector<double>> lambda;  // per point, per type
  std::vector<double> pdf;                  // f(t_i)
};

GridEval evaluate_grid(const IntensityFn& intensity, int num_types, const PredictionGrid& grid) {
  if (!(grid.t_end > grid.t_start)) raise(ErrorCode::InvalidArgument, "grid needs t_end > t_start");
  if (grid.n_points < 2) raise(ErrorCode::InvalidArgument, "grid needs n_points >= 2");
  const int n = grid.n_points;
  const double dt = (grid.t_end - grid.t_start) / n;
  GridEval g;
  g.t.resize(n + 1);
  g.lambda_total.resize(n + 1);
  g.lambda.resize(n + 1);
  g.pdf.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    g.t[i] = grid.t_start + dt * i;
    g.lambda[i] = intensity(g.t[i]);
    if (static_cast<int>(g.lambda[i].size()) != num_types)
      raise(ErrorCode::Shape, "intensity returned wrong number of types");
    double tot = 0.0;
    for (double v : g.lambda[i]) tot += v;
    g.lambda_total[i] = tot;
  }
  double cum = 0.0;
  g.pdf[0] = g.lambda_total[0];  // exp(0) factor
  for (int i = 1; i <= n; ++i) {
    cum += grid.scheme == Scheme::RightRiemann
               ? g.lambda_total[i] * dt
               : 0.5 * (g.lambda_total[i] + g.lambda_total[i - 1]) * dt;
    g.pdf[i] = g.lambda_total[i] * std::exp(-cum);
  }
  return g;
}

// Integral of g(t_i)*pdf(t_i) over the grid under the chosen scheme.
double weighted_integral(const GridEval& g, const PredictionGrid& grid,
                         const std::function<double(int)>& value) {
  const int n = grid.n_points;
  const double dt = (grid.t_end - grid.t_start) / n;
  double acc = 0.0;
  if (grid.scheme == Scheme::RightRiemann) {
    for (int i = 1; i <= n; ++i) acc += value(i) * g.pdf[i] * dt;
  } else {
    for (int i = 1; i <= n; ++i)
      acc += 0.5 * (value(i) * g.pdf[i] + value(i - 1) * g.pdf[i - 1]) * dt;
  }
  return acc;
}

}  // namespace

double time_pdf(const IntensityFn& intensity, double t_start, double t, int n_points,
                Scheme scheme) {
  if (!(t > t_start)) raise(ErrorCode::InvalidArgument, "time_pdf: t must exceed t_start");
  PredictionGrid grid{t_start, t, n_points, scheme};
  GridEval g = evaluate_grid(intensity, static_cast<int>(intensity(t).size()), grid);
  return g.pdf.back();
}

PredictionResult integrate_prediction(const IntensityFn& intensity, int num_types,
                                      const PredictionGrid& grid) {
  GridEval g = evaluate_grid(intensity, num_types, grid);

  PredictionResult out;
  out.pdf_mass = weighted_integral(g, grid, [](int) { return 1.0; });
  const double mass = out.pdf_mass > 0.0 ? out.pdf_mass : 1.0;
  out.expected_time = weighted_integral(g, grid, [&](int i) { return g.t[i]; }) / mass;

  out.type_probs.resize(num_types);
  for (int k = 0; k < num_types; ++k) {
    out.type_probs[k] = weighted_integral(g, grid, [&](int i) {
                          return g.lambda_total[i] > 0.0 ? g.lambda[i][k] / g.lambda_total[i] : 0.0;
                        }) /
                        mass;
  }
  out.predicted_type = 0;
  for (int k = 1; k < num_types; ++k)
    if (out.type_probs[k] > out.type_probs[out.predicted_type]) out.predicted_type = k;
  return out;
}

PredictionResult predict_next(const IntensityFn& intensity, int num_types, double t_start,
                              double ref_gap, int n_points, Scheme scheme) {
  if (!(ref_gap > 0.0)) raise(ErrorCode::InvalidArgument, "predict_next: ref_gap must be > 0");
  PredictionGrid grid{t_start, t_start + 10.0 * ref_gap, n_points, scheme};
  PredictionResult out;
  for (int attempt = 0;; ++attempt) {
    out = integrate_prediction(intensity, num_types, grid);
    if (out.pdf_mass >= 0.999 || attempt == 4) break;
    grid.t_end = t_start + (grid.t_end - t_start) * 2.0;
  }
  out.low_mass = out.pdf_mass < 0.99;
  return out;
}

std::vector<double> conditional_type_prob(const IntensityFn& intensity, int num_types, double t) {
  std::vector<double> lam = intensity(t);
  if (static_cast<int>(lam.size()) != num_types)
    raise(ErrorCode::Shape, "intensity returned wrong number of types");
  double total = 0.0;
  for (double v : lam) total += v;
  if (total <= 0.0) return std::vector<double>(num_types, 1.0 / num_types);
  for (double& v : lam) v /= total;
  return lam;
}

IntensityFn neural_intensity(const VntppModel& model, std::vector<double> z, double t_last) {
  return [&model, z = std::move(z), t_last](double t) {
    return model.intensity_eval(z, std::max(0.0, t - t_last));
  };
}

IntensityFn hawkes_intensity(const HawkesSpec& spec, std::vector<Event> history) {
  return [spec, history = std::move(history)](double t) {
    return true_intensity(spec, history, t);
  };
}

}  // namespace vntpp
