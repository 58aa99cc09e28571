#include "vntpp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vntpp/common.hpp"
#include "vntpp/rng.hpp"

namespace vntpp {

using nlohmann::json;

double f1_score(const std::vector<int>& truth, const std::vector<int>& predicted, int num_types,
                F1Average average) {
  if (truth.size() != predicted.size() || truth.empty())
    raise(ErrorCode::InvalidArgument, "f1_score: label vectors must be nonempty and equal-sized");
  std::vector<long> tp(num_types, 0), fp(num_types, 0), fn(num_types, 0), support(num_types, 0);
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= num_types || p < 0 || p >= num_types)
      raise(ErrorCode::IndexOutOfRange, "f1_score: label outside [0, K)");
    ++support[t];
    if (t == p) {
      ++tp[t];
      ++correct;
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  if (average == F1Average::Micro) {
    // Single-label multi-class micro precision = recall = accuracy.
    return static_cast<double>(correct) / static_cast<double>(truth.size());
  }
  double weighted = 0.0, macro = 0.0;
  long total_support = 0;
  for (int k = 0; k < num_types; ++k) {
    const double denom = 2.0 * tp[k] + fp[k] + fn[k];
    const double f1k = denom > 0.0 ? 2.0 * tp[k] / denom : 0.0;
    macro += f1k;
    weighted += f1k * support[k];
    total_support += support[k];
  }
  return average == F1Average::Macro ? macro / num_types
                                     : weighted / static_cast<double>(total_support);
}

MetricsReport compute_metrics(const std::vector<LabeledPrediction>& predictions, int num_types,
                              F1Average average, bool normalize_times, double ref_gap) {
  if (predictions.empty()) raise(ErrorCode::InvalidArgument, "compute_metrics: no predictions");
  MetricsReport rep;
  rep.n_events = static_cast<long>(predictions.size());
  rep.diversity.assign(num_types, 0);
  std::vector<int> truth, pred;
  truth.reserve(predictions.size());
  pred.reserve(predictions.size());
  double sq = 0.0, ab = 0.0;
  const double norm = normalize_times ? ref_gap : 1.0;
  for (const auto& p : predictions) {
    truth.push_back(p.true_type);
    pred.push_back(p.prediction.predicted_type);
    if (p.true_type == p.prediction.predicted_type) ++rep.diversity[p.true_type];
    const double err = (p.prediction.expected_time - p.true_time) / norm;
    sq += err * err;
    ab += std::abs(err);
  }
  rep.f1 = f1_score(truth, pred, num_types, average);
  rep.time_rmse = std::sqrt(sq / predictions.size());
  rep.time_mae = ab / predictions.size();
  return rep;
}

std::string MetricsReport::to_json() const {
  json j;
  j["f1"] = f1;
  j["time_rmse"] = time_rmse;
  j["time_mae"] = time_mae;
  if (intensity_rmse) j["intensity_rmse"] = *intensity_rmse;
  if (intensity_mae) j["intensity_mae"] = *intensity_mae;
  j["diversity"] = diversity;
  j["n_events"] = n_events;
  return j.dump(2);
}

IntensityError intensity_error(const SequenceIntensity& learned, const HawkesSpec& truth,
                               const Dataset& test, int resolution) {
  if (test.sequences.empty()) raise(ErrorCode::UnsupportedDataset, "intensity_error: empty dataset");
  if (resolution < 2) raise(ErrorCode::InvalidArgument, "intensity_error: resolution must be >= 2");
  double rmse_acc = 0.0, mae_acc = 0.0;
  for (const auto& seq : test.sequences) {
    IntensityFn fn = learned(seq);
    double sq = 0.0, ab = 0.0;
    std::vector<Event> prefix;
    std::size_t next_event = 0;
    for (int g = 0; g < resolution; ++g) {
      const double t = seq.horizon * static_cast<double>(g) / (resolution - 1);
      while (next_event < seq.events.size() && seq.events[next_event].time <= t)
        prefix.push_back(seq.events[next_event++]);
      const auto lam_true = true_intensity(truth, prefix, t);
      const auto lam_hat = fn(t);
      for (int k = 0; k < truth.num_types; ++k) {
        const double d = lam_hat[k] - lam_true[k];
        sq += d * d;
        ab += std::abs(d);
      }
    }
    const double cells = static_cast<double>(resolution) * truth.num_types;
    rmse_acc += std::sqrt(sq / cells);
    mae_acc += ab / cells;
  }
  return {rmse_acc / test.sequences.size(), mae_acc / test.sequences.size()};
}

SequenceIntensity model_sequence_intensity(const VntppModel& model) {
  return [&model](const EventSequence& seq) -> IntensityFn {
    auto latents = std::make_shared<VntppModel::EvalLatents>(model.eval_latents(seq, true));
    std::vector<double> times;
    for (const Event& e : seq.events) times.push_back(e.time);
    return [&model, latents, times = std::move(times)](double t) {
      // Governing position: first event index with timestamp >= t.
      const auto it = std::lower_bound(times.begin(), times.end(), t);
      const std::size_t p = static_cast<std::size_t>(it - times.begin());
      const double dt = t - latents->t_last[p];
      return model.intensity_eval(latents->mu_z[p], std::max(dt, 0.0));
    };
  };
}

// ---- one-sided Jacobi SVD ----

Svd svd_jacobi(std::vector<double> a, int rows, int cols) {
  if (rows < 1 || cols < 1 || a.size() != static_cast<std::size_t>(rows) * cols)
    raise(ErrorCode::Shape, "svd_jacobi: bad dimensions");
  std::vector<double> v(static_cast<std::size_t>(cols) * cols, 0.0);
  for (int j = 0; j < cols; ++j) v[static_cast<std::size_t>(j) * cols + j] = 1.0;

  auto col_dot = [&](int p, int q) {
    double s = 0.0;
    for (int i = 0; i < rows; ++i)
      s += a[static_cast<std::size_t>(i) * cols + p] * a[static_cast<std::size_t>(i) * cols + q];
    return s;
  };

  const int max_sweeps = 60;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < cols - 1; ++p)
      for (int q = p + 1; q < cols; ++q) {
        const double app = col_dot(p, p);
        const double aqq = col_dot(q, q);
        const double apq = col_dot(p, q);
        if (std::abs(apq) <= tol * std::sqrt(app * aqq) + 1e-300) continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < rows; ++i) {
          double& aip = a[static_cast<std::size_t>(i) * cols + p];
          double& aiq = a[static_cast<std::size_t>(i) * cols + q];
          const double tmp = c * aip - s * aiq;
          aiq = s * aip + c * aiq;
          aip = tmp;
        }
        for (int i = 0; i < cols; ++i) {
          double& vip = v[static_cast<std::size_t>(i) * cols + p];
          double& viq = v[static_cast<std::size_t>(i) * cols + q];
          const double tmp = c * vip - s * viq;
          viq = s * vip + c * viq;
          vip = tmp;
        }
      }
    if (!rotated) break;
  }

  Svd out;
  out.rows = rows;
  out.cols = cols;
  out.singular_values.resize(cols);
  out.u.assign(a.size(), 0.0);
  out.v = std::move(v);
  std::vector<int> order(cols);
  for (int j = 0; j < cols; ++j) {
    order[j] = j;
    out.singular_values[j] = std::sqrt(std::max(col_dot(j, j), 0.0));
  }
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return out.singular_values[x] > out.singular_values[y];
  });

  std::vector<double> sv_sorted(cols), v_sorted(out.v.size()), u_sorted(out.u.size());
  for (int j = 0; j < cols; ++j) {
    const int src = order[j];
    sv_sorted[j] = out.singular_values[src];
    for (int i = 0; i < cols; ++i)
      v_sorted[static_cast<std::size_t>(i) * cols + j] = out.v[static_cast<std::size_t>(i) * cols + src];
    const double sigma = sv_sorted[j];
    if (sigma > 1e-300)
      for (int i = 0; i < rows; ++i)
        u_sorted[static_cast<std::size_t>(i) * cols + j] =
            a[static_cast<std::size_t>(i) * cols + src] / sigma;
  }
  out.singular_values = std::move(sv_sorted);
  out.v = std::move(v_sorted);
  out.u = std::move(u_sorted);
  return out;
}

SvdReport latent_svd(const VntppModel& model, const Dataset& data, std::size_t max_points) {
  if (data.sequences.empty()) raise(ErrorCode::InvalidArgument, "latent_svd: empty dataset");
  const int j = model.config().latent_dim;
  std::vector<double> latents;
  std::vector<int> labels;
  for (const auto& seq : data.sequences) {
    const auto ev = model.eval_latents(seq, false);
    for (std::size_t p = 0; p < seq.events.size(); ++p) {
      latents.insert(latents.end(), ev.mu_z[p].begin(), ev.mu_z[p].end());
      labels.push_back(seq.events[p].type);
    }
    if (labels.size() >= max_points) break;
  }
  std::size_t n = labels.size();
  if (n > max_points) {
    n = max_points;
    latents.resize(n * static_cast<std::size_t>(j));
    labels.resize(n);
  }

  // Center columns.
  std::vector<double> mean(j, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < j; ++d) mean[d] += latents[i * j + d];
  for (int d = 0; d < j; ++d) mean[d] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < j; ++d) latents[i * j + d] -= mean[d];

  Svd svd = svd_jacobi(latents, static_cast<int>(n), j);

  SvdReport rep;
  rep.singular_values = svd.singular_values;
  rep.labels = std::move(labels);
  rep.axes = std::min(3, j);
  rep.projections.assign(n * static_cast<std::size_t>(rep.axes), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int ax = 0; ax < rep.axes; ++ax) {
      double dot = 0.0;
      for (int d = 0; d < j; ++d)
        dot += latents[i * j + d] * svd.v[static_cast<std::size_t>(d) * j + ax];
      rep.projections[i * rep.axes + ax] = dot;
    }
  return rep;
}

std::string SvdReport::to_json() const {
  json j;
  j["singular_values"] = singular_values;
  j["axes"] = axes;
  j["n_points"] = labels.size();
  return j.dump(2);
}

std::string SvdReport::projections_csv() const {
  std::ostringstream out;
  out << "x,y,z,label\n";
  out.precision(17);
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int ax = 0; ax < 3; ++ax)
      out << (ax < axes ? projections[i * axes + ax] : 0.0) << ",";
    out << labels[i] << "\n";
  }
  return out.str();
}

// ---- KS / time rescaling ----

double ks_pvalue(double statistic, std::size_t n) {
  if (n == 0) return 1.0;
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
  double p = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    p += 2.0 * sign * term;
    sign = -sign;
    if (term < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

KsResult ks_test_exp1(std::vector<double> samples) {
  if (samples.empty()) raise(ErrorCode::InvalidArgument, "ks_test_exp1: no samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 1.0 - std::exp(-std::max(samples[i], 0.0));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  return {d, ks_pvalue(d, n), n};
}

KsResult rescaling_gof(const VntppModel& model, const Dataset& data, int grid_per_interval) {
  std::vector<double> gaps;
  for (const auto& seq : data.sequences) {
    const auto latents = model.eval_latents(seq, false);
    for (std::size_t p = 0; p < seq.events.size(); ++p) {
      const double lo = latents.t_last[p];
      const double hi = seq.events[p].time;
      if (!(hi > lo)) continue;
      const double step = (hi - lo) / grid_per_interval;
      double acc = 0.0;
      double prev = 0.0;
      for (int g = 0; g <= grid_per_interval; ++g) {
        const auto lam = model.intensity_eval(latents.mu_z[p], step * g);
        double tot = 0.0;
        for (double v : lam) tot += v;
        if (g > 0) acc += 0.5 * (tot + prev) * step;
        prev = tot;
      }
      gaps.push_back(acc);
    }
  }
  return ks_test_exp1(std::move(gaps));
}

KsResult rescaling_gof(const HawkesSpec& spec, const Dataset& data, int mc_samples,
                       std::uint64_t seed) {
  std::vector<double> gaps;
  CounterRng rng(seed, 17);
  for (const auto& seq : data.sequences) {
    double prev_t = 0.0;
    std::vector<Event> prefix;
    for (std::size_t p = 0; p < seq.events.size(); ++p) {
      const double t = seq.events[p].time;
      if (t > prev_t) {
        double inc;
        if (spec.kernel.family == KernelFamily::Exponential) {
          inc = compensator_closed_form(spec, seq, prev_t, t);
        } else {
          double acc = 0.0;
          for (int q = 0; q < mc_samples; ++q) {
            const auto lam = true_intensity(spec, prefix, prev_t + (t - prev_t) * rng.uniform());
            for (double v : lam) acc += v;
          }
          inc = (t - prev_t) * acc / mc_samples;
        }
        gaps.push_back(inc);
      }
      prefix.push_back(seq.events[p]);
      prev_t = t;
    }
  }
  return ks_test_exp1(std::move(gaps));
}

}  // namespace vntpp
