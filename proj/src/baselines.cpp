#include "vntpp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vntpp/common.hpp"
#include "vntpp/tensor.hpp"

namespace vntpp {

using ad::Tensor;

namespace {

double inv_softplus(double y) {
  if (y <= 0.0) raise(ErrorCode::InvalidArgument, "inv_softplus needs y > 0");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

constexpr double kInvSqrt2Pi = 0.3989422804014327;

struct RawParams {
  Tensor raw_mu;      // [K]
  Tensor raw_a;       // [K,K]
  Tensor raw_beta;    // [1] (exponential, when trained)
  Tensor raw_center;  // [1] (gaussian)
  Tensor raw_width;   // [1]
};

struct MappedParams {
  Tensor mu;      // [K]
  Tensor a;       // [K,K] (constant zero when fixed)
  Tensor beta;    // [1]
  Tensor center;  // [1]
  Tensor width;   // [1]
};

MappedParams map_params(const RawParams& raw, const FitOptions& opts) {
  MappedParams m;
  m.mu = ad::softplus(raw.raw_mu);
  m.a = opts.fix_adjacency_zero ? Tensor::zeros(raw.raw_a.shape()) : ad::softplus(raw.raw_a);
  if (opts.kernel == KernelFamily::Exponential)
    m.beta = opts.fit_beta ? ad::softplus(raw.raw_beta) : Tensor::scalar(opts.fixed_beta);
  else {
    m.center = ad::softplus(raw.raw_center);
    m.width = ad::softplus(raw.raw_width);
  }
  return m;
}

// Pairwise gaussian kernel values from tensor center/width: f(delta) masked.
Tensor gaussian_kernel_matrix(const Tensor& deltas, const std::vector<double>& valid,
                              const MappedParams& p) {
  Tensor d = ad::subtract(deltas, p.center);
  Tensor q = ad::multiply(d, d);
  Tensor inv_two_w2 = ad::scale(ad::exp(ad::scale(ad::log(ad::multiply(p.width, p.width)), -1.0)), 0.5);
  Tensor expo = ad::exp(ad::scale(ad::multiply(q, inv_two_w2), -1.0));
  Tensor norm = ad::multiply(ad::exp(ad::scale(ad::log(p.width), -1.0)), Tensor::scalar(kInvSqrt2Pi));
  Tensor f = ad::multiply(ad::multiply(expo, norm), Tensor::from_data(deltas.shape(), valid));
  return f;
}

// Log-likelihood graph of one sequence; scale applies to the contribution.
Tensor sequence_loglik(const EventSequence& seq, int k, const MappedParams& p,
                       const FitOptions& opts, CounterRng& rng) {
  const int len = static_cast<int>(seq.size());
  const double horizon = seq.horizon;

  std::vector<double> onehot(static_cast<std::size_t>(len) * k, 0.0);
  for (int i = 0; i < len; ++i) onehot[static_cast<std::size_t>(i) * k + seq.events[i].type] = 1.0;
  Tensor e_mat = Tensor::from_data({len, k}, onehot);
  std::vector<double> onehot_t(static_cast<std::size_t>(k) * len, 0.0);
  for (int i = 0; i < len; ++i) onehot_t[static_cast<std::size_t>(seq.events[i].type) * len + i] = 1.0;
  Tensor e_mat_t = Tensor::from_data({k, len}, std::move(onehot_t));

  // Event term: lambda_i = mu_{k_i} + sum_{j<i} a[k_i][k_j] f(t_i - t_j).
  std::vector<double> deltas(static_cast<std::size_t>(len) * len, 0.0);
  std::vector<double> lower(static_cast<std::size_t>(len) * len, 0.0);
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < i; ++j) {
      deltas[static_cast<std::size_t>(i) * len + j] = seq.events[i].time - seq.events[j].time;
      lower[static_cast<std::size_t>(i) * len + j] = 1.0;
    }
  Tensor delta_t = Tensor::from_data({len, len}, std::move(deltas));

  Tensor kernel_mat;
  if (opts.kernel == KernelFamily::Exponential) {
    Tensor bd = ad::multiply(delta_t, p.beta);
    Tensor decay = ad::exp(ad::scale(bd, -1.0));
    kernel_mat = ad::multiply(ad::multiply(decay, p.beta),
                              Tensor::from_data({len, len}, std::move(lower)));
  } else {
    kernel_mat = gaussian_kernel_matrix(delta_t, lower, p);
  }
  Tensor coupling = ad::matmul(ad::matmul(e_mat, p.a), e_mat_t);  // a[k_i][k_j]
  Tensor excitation = ad::sum_last(ad::multiply(coupling, kernel_mat));  // [L]
  Tensor mu_sel = ad::reshape(ad::matmul(e_mat, ad::reshape(p.mu, {k, 1})), {len});
  Tensor event_term = ad::sum(ad::log(ad::add(mu_sel, excitation)));

  // Compensator over [0, T].
  Tensor colsum = ad::matmul(Tensor::full({1, k}, 1.0), p.a);             // [1,K]
  Tensor colsum_ev = ad::reshape(ad::matmul(e_mat, ad::transpose(colsum, {1, 0})), {len});
  Tensor comp;
  if (opts.kernel == KernelFamily::Exponential) {
    std::vector<double> tail(len);
    for (int i = 0; i < len; ++i) tail[i] = horizon - seq.events[i].time;
    Tensor decay = ad::exp(ad::scale(ad::multiply(Tensor::from_data({len}, std::move(tail)), p.beta), -1.0));
    Tensor mass = ad::subtract(Tensor::full({len}, 1.0), decay);
    comp = ad::add(ad::scale(ad::sum(p.mu), horizon), ad::sum(ad::multiply(colsum_ev, mass)));
  } else {
    // Stratified Monte Carlo on the segments between events (plus the
    // leading and trailing segments to 0 and T).
    std::vector<double> bounds;
    bounds.push_back(0.0);
    for (const Event& e : seq.events) bounds.push_back(e.time);
    bounds.push_back(horizon);
    const int m = opts.mc_samples;
    const int n_seg = static_cast<int>(bounds.size()) - 1;
    std::vector<double> samples;
    std::vector<double> seg_weight;
    samples.reserve(static_cast<std::size_t>(n_seg) * m);
    for (int s = 0; s < n_seg; ++s) {
      const double width = bounds[s + 1] - bounds[s];
      seg_weight.push_back(width / m);
      for (int q = 0; q < m; ++q) samples.push_back(bounds[s] + width * rng.uniform());
    }
    const int nq = static_cast<int>(samples.size());
    std::vector<double> sdelta(static_cast<std::size_t>(nq) * len, 0.0);
    std::vector<double> svalid(static_cast<std::size_t>(nq) * len, 0.0);
    for (int q = 0; q < nq; ++q)
      for (int i = 0; i < len; ++i)
        if (seq.events[i].time < samples[q]) {
          sdelta[static_cast<std::size_t>(q) * len + i] = samples[q] - seq.events[i].time;
          svalid[static_cast<std::size_t>(q) * len + i] = 1.0;
        }
    Tensor f_mat = gaussian_kernel_matrix(Tensor::from_data({nq, len}, std::move(sdelta)), svalid, p);
    Tensor lam_ex = ad::reshape(ad::matmul(f_mat, ad::reshape(colsum_ev, {len, 1})), {nq});
    std::vector<double> weights(static_cast<std::size_t>(nq));
    for (int s = 0; s < n_seg; ++s)
      for (int q = 0; q < m; ++q) weights[static_cast<std::size_t>(s) * m + q] = seg_weight[s];
    Tensor mc = ad::sum(ad::multiply(lam_ex, Tensor::from_data({nq}, std::move(weights))));
    comp = ad::add(ad::scale(ad::sum(p.mu), horizon), mc);
  }
  return ad::subtract(event_term, comp);
}

}  // namespace

HawkesFit fit_hawkes(const Dataset& data, const FitOptions& opts) {
  if (data.sequences.empty()) raise(ErrorCode::Validation, "fit_hawkes: empty dataset");
  const int k = data.num_types;
  const double n_seq = static_cast<double>(data.sequences.size());

  double total_time = 0.0;
  for (const auto& s : data.sequences) total_time += s.horizon;
  const double event_rate = static_cast<double>(data.total_events()) / std::max(total_time, 1e-12);
  const double gap = data.mean_gap();

  RawParams raw;
  raw.raw_mu = Tensor::full({k}, inv_softplus(std::max(event_rate / k, 1e-3)));
  raw.raw_a = Tensor::full({k, k}, inv_softplus(0.1));
  raw.raw_beta = Tensor::scalar(inv_softplus(1.0));
  raw.raw_center = Tensor::scalar(inv_softplus(std::max(gap * 0.5, 1e-3)));
  raw.raw_width = Tensor::scalar(inv_softplus(std::max(gap * 0.5, 1e-3)));

  std::vector<Tensor> trainable{raw.raw_mu};
  if (!opts.fix_adjacency_zero) trainable.push_back(raw.raw_a);
  if (opts.kernel == KernelFamily::Exponential) {
    if (opts.fit_beta) trainable.push_back(raw.raw_beta);
  } else {
    trainable.push_back(raw.raw_center);
    trainable.push_back(raw.raw_width);
  }
  for (Tensor& t : trainable) t.set_requires_grad(true);

  ad::Adam adam(trainable, {opts.learning_rate, 0.9, 0.999, 1e-8});

  double best_ll = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_raw;
  double prev_ll = 0.0;
  bool converged = false;
  int iters = 0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    CounterRng rng(opts.seed, (7ull << 32) + static_cast<std::uint64_t>(it));
    for (Tensor& t : trainable) t.zero_grad();
    double total_ll = 0.0;
    for (const auto& seq : data.sequences) {
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      MappedParams p = map_params(raw, opts);
      Tensor ll = sequence_loglik(seq, k, p, opts, rng);
      total_ll += ll.item();
      Tensor loss = ad::scale(ll, -1.0 / n_seq);
      tape.backward(loss);
    }
    adam.step();
    iters = it + 1;

    if (total_ll > best_ll) {
      best_ll = total_ll;
      best_raw.clear();
      for (const Tensor& t : trainable) best_raw.push_back(t.values());
    }
    if (it > 0) {
      const double rel = std::abs(total_ll - prev_ll) / std::max(1.0, std::abs(total_ll));
      if (rel <= opts.rel_tol) {
        converged = true;
        break;
      }
    }
    prev_ll = total_ll;
  }
  if (!best_raw.empty())
    for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i].values() = best_raw[i];

  HawkesFit fit;
  fit.converged = converged;
  fit.iterations = iters;
  fit.train_loglik = best_ll / n_seq;
  fit.spec.num_types = k;
  MappedParams p = map_params(raw, opts);
  fit.spec.mu = p.mu.values();
  fit.spec.adjacency = p.a.values();
  if (opts.fix_adjacency_zero)
    for (double& v : fit.spec.adjacency) v = 0.0;
  if (opts.kernel == KernelFamily::Exponential) {
    fit.spec.kernel.family = KernelFamily::Exponential;
    fit.spec.kernel.beta = p.beta.item();
  } else {
    fit.spec.kernel.family = KernelFamily::Gaussian;
    fit.spec.kernel.center = p.center.item();
    fit.spec.kernel.width = p.width.item();
  }
  return fit;
}

double hawkes_loglik(const HawkesSpec& spec, const Dataset& data, int mc_samples,
                     std::uint64_t seed) {
  double total = 0.0;
  CounterRng rng(seed, 11);
  for (const auto& seq : data.sequences) {
    double event_term = 0.0;
    std::vector<Event> history;
    for (const Event& e : seq.events) {
      const auto lam = true_intensity(spec, history, e.time);
      event_term += std::log(std::max(lam[e.type], 1e-300));
      history.push_back(e);
    }
    double comp = 0.0;
    if (spec.kernel.family == KernelFamily::Exponential) {
      comp = compensator_closed_form(spec, seq, 0.0, seq.horizon);
    } else {
      // Stratified MC over inter-event segments; lambda at t sees only the
      // prefix of events before t.
      std::vector<double> bounds{0.0};
      for (const Event& e : seq.events) bounds.push_back(e.time);
      bounds.push_back(seq.horizon);
      std::vector<Event> prefix;
      for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
        if (s >= 1) prefix.push_back(seq.events[s - 1]);
        const double width = bounds[s + 1] - bounds[s];
        if (width <= 0.0) continue;
        double acc = 0.0;
        for (int q = 0; q < mc_samples; ++q) {
          const auto lam = true_intensity(spec, prefix, bounds[s] + width * rng.uniform());
          for (double v : lam) acc += v;
        }
        comp += width * acc / mc_samples;
      }
    }
    total += event_term - comp;
  }
  return total / static_cast<double>(data.sequences.size());
}

PredictionResult hawkes_predict(const HawkesFit& fit, const std::vector<Event>& history,
                                double t_last, double ref_gap, int n_points, Scheme scheme) {
  return predict_next(hawkes_intensity(fit.spec, history), fit.spec.num_types, t_last, ref_gap,
                      n_points, scheme);
}

}  // namespace vntpp
