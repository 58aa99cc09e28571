#include "vntpp/objective.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include "vntpp/common.hpp"

namespace vntpp {

using ad::Tensor;

double mc_compensator(const std::function<double(double)>& total_intensity,
                      const std::vector<double>& times, int mc_samples, CounterRng& rng) {
  if (mc_samples < 1) raise(ErrorCode::InvalidArgument, "mc_samples must be >= 1");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double width = times[i + 1] - times[i];
    double acc = 0.0;
    for (int m = 0; m < mc_samples; ++m)
      acc += total_intensity(times[i] + width * rng.uniform());
    total += width * acc / mc_samples;
  }
  return total;
}

LossGraph elbo_loss(const VntppModel& model, const Batch& batch, int mc_samples,
                    ad::Mode mode, CounterRng& rng) {
  const int rows = batch.rows, len = batch.max_len, k = batch.num_types;
  const int j = model.config().latent_dim;
  const double inv_rows = 1.0 / rows;

  ModelForward fwd = model.forward(batch, mode, &rng);

  // Elapsed time since the previous event (0 for the first event and at
  // padded positions) and the masked one-hot of the realized types.
  std::vector<double> dt(static_cast<std::size_t>(rows) * len, 0.0);
  std::vector<double> mask01(static_cast<std::size_t>(rows) * len, 0.0);
  std::vector<double> onehot(static_cast<std::size_t>(rows) * len * k, 0.0);
  std::size_t n_real = 0;
  for (int b = 0; b < rows; ++b)
    for (int p = 0; p < len; ++p) {
      const std::size_t at = static_cast<std::size_t>(b) * len + p;
      if (!batch.mask[at]) continue;
      dt[at] = p == 0 ? batch.times[at] : batch.times[at] - batch.times[at - 1];
      mask01[at] = 1.0;
      onehot[at * k + batch.types[at]] = 1.0;
      ++n_real;
    }

  Tensor mask_flat = Tensor::from_data({rows * len}, mask01);
  std::vector<double> inv_mask(mask01.size());
  for (std::size_t i = 0; i < mask01.size(); ++i) inv_mask[i] = 1.0 - mask01[i];
  Tensor inv_mask_flat = Tensor::from_data({rows * len}, std::move(inv_mask));
  Tensor onehot_flat = Tensor::from_data({rows * len, k}, std::move(onehot));

  // Reconstruction: categorical next-type + gap log-density, masked.
  Tensor type_lp = ad::log_softmax(ad::reshape(fwd.type_logits, {rows * len, k}));
  Tensor type_term = ad::sum(ad::multiply(type_lp, onehot_flat));

  constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)
  std::vector<double> gap_target(dt);
  double target_const = 0.0;
  if (model.config().lognormal_gap) {
    for (std::size_t i = 0; i < gap_target.size(); ++i)
      if (mask01[i] > 0.0 && gap_target[i] > 0.0) {
        gap_target[i] = std::log(gap_target[i]);
        target_const -= gap_target[i];  // -ln(gap) jacobian term
      }
  }
  Tensor diff = ad::subtract(ad::reshape(fwd.time_pred, {rows * len}),
                             Tensor::from_data({rows * len}, std::move(gap_target)));
  Tensor sq = ad::multiply(ad::multiply(diff, diff), mask_flat);
  Tensor time_term = ad::add(ad::scale(ad::sum(sq), -0.5),
                             Tensor::scalar(-kHalfLog2Pi * static_cast<double>(n_real) + target_const));
  Tensor recon_t = ad::scale(ad::add(type_term, time_term), inv_rows);

  // KL, summed over real positions.
  Tensor kl_t = ad::scale(model.kl_divergence(fwd.posterior, batch), inv_rows);

  // Event log-intensities at the observed events.
  Tensor z2 = ad::reshape(fwd.z, {rows * len, j});
  Tensor lambda_all = model.intensity_tensor(z2, dt);
  Tensor lambda_sel = ad::sum_last(ad::multiply(lambda_all, onehot_flat));
  Tensor lambda_safe = ad::add(ad::multiply(lambda_sel, mask_flat), inv_mask_flat);
  Tensor event_t = ad::scale(ad::sum(ad::log(lambda_safe)), inv_rows);

  // Monte Carlo compensator over the event span (intervals between
  // consecutive events; the pre-first-event segment is excluded).
  Tensor comp_t = Tensor::scalar(0.0);
  if (len > 1) {
    const int ni = len - 1;  // intervals per row
    Tensor z_mc = ad::reshape(ad::slice(fwd.z, 1, 1, ni), {rows * ni, j});
    Tensor z_rep = ad::reshape(ad::repeat_mid(z_mc, mc_samples), {rows * ni * mc_samples, j});
    std::vector<double> dt_mc(static_cast<std::size_t>(rows) * ni * mc_samples, 0.0);
    std::vector<double> weight(static_cast<std::size_t>(rows) * ni, 0.0);
    for (int b = 0; b < rows; ++b)
      for (int p = 0; p < ni; ++p) {
        const std::size_t at = static_cast<std::size_t>(b) * len + p;
        const bool real = batch.mask[at + 1] != 0;
        const double width = real ? batch.times[at + 1] - batch.times[at] : 0.0;
        weight[static_cast<std::size_t>(b) * ni + p] = width;
        for (int m = 0; m < mc_samples; ++m) {
          const double u = rng.uniform();
          dt_mc[(static_cast<std::size_t>(b) * ni + p) * mc_samples + m] = width * u;
        }
      }
    Tensor lambda_mc = model.intensity_tensor(z_rep, dt_mc);      // [B*ni*M, K]
    Tensor lam_tot = ad::sum_last(lambda_mc);                     // [B*ni*M]
    Tensor lam_mean = ad::mean_last(ad::reshape(lam_tot, {rows * ni, mc_samples}));
    Tensor weighted = ad::multiply(lam_mean, Tensor::from_data({rows * ni}, std::move(weight)));
    comp_t = ad::scale(ad::sum(weighted), inv_rows);
  }

  LossGraph out;
  out.total = ad::scale(
      ad::subtract(ad::add(recon_t, event_t), ad::add(kl_t, comp_t)), -1.0);
  if (!std::isfinite(out.total.item()))
    raise(ErrorCode::NonFinite, "elbo_loss: non-finite total loss");
  out.breakdown.recon = recon_t.item();
  out.breakdown.kl = kl_t.item();
  out.breakdown.event_loglik = event_t.item();
  out.breakdown.compensator = comp_t.item();
  out.breakdown.total = out.total.item();
  return out;
}

namespace {

Dataset filter_trainable(const Dataset& d, std::size_t* skipped) {
  Dataset out;
  out.num_types = d.num_types;
  out.name = d.name;
  for (const auto& s : d.sequences) {
    if (s.size() < 2) {
      ++*skipped;
      continue;
    }
    out.sequences.push_back(s);
  }
  return out;
}

LossBreakdown weighted_add(const LossBreakdown& acc, const LossBreakdown& b, double w) {
  LossBreakdown out = acc;
  out.recon += w * b.recon;
  out.kl += w * b.kl;
  out.event_loglik += w * b.event_loglik;
  out.compensator += w * b.compensator;
  out.total += w * b.total;
  return out;
}

LossBreakdown scaled(const LossBreakdown& b, double s) {
  return {b.recon * s, b.kl * s, b.event_loglik * s, b.compensator * s, b.total * s};
}

LossBreakdown dataset_loss(const VntppModel& model, const std::vector<Batch>& batches,
                           int mc_samples, std::uint64_t seed, std::uint64_t stream) {
  LossBreakdown acc;
  double n = 0.0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    CounterRng rng(seed, stream + i);
    LossGraph g = elbo_loss(model, batches[i], mc_samples, ad::Mode::Eval, rng);
    acc = weighted_add(acc, g.breakdown, batches[i].rows);
    n += batches[i].rows;
  }
  return scaled(acc, n > 0 ? 1.0 / n : 0.0);
}

}  // namespace

TrainResult train(VntppModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, ad::Adam& adam, int start_epoch,
                  const EpochCallback& on_epoch) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.mc_samples < 1)
    raise(ErrorCode::InvalidArgument, "epochs, batch_size and mc_samples must be >= 1");
  TrainResult result;
  Dataset trainable = filter_trainable(train_set, &result.skipped_short_sequences);
  Dataset val_trainable = filter_trainable(val_set, &result.skipped_short_sequences);
  if (trainable.sequences.empty() || val_trainable.sequences.empty())
    raise(ErrorCode::Validation, "train/val sets are empty after dropping length-1 sequences");
  if (result.skipped_short_sequences > 0)
    std::cerr << "[vntpp] skipped " << result.skipped_short_sequences
              << " length-1 sequences (no inter-event interval)\n";

  const bool prev_checks = nonfinite_checks_enabled();
  set_nonfinite_checks(cfg.check_nonfinite);
  adam.config().lr = cfg.learning_rate;

  const std::vector<Batch> val_batches = batchify(val_trainable, cfg.batch_size);
  std::vector<ad::Tensor> param_tensors = model.params().tensors();

  const std::size_t n = trainable.sequences.size();
  std::vector<std::size_t> order(n);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng shuffle_rng(cfg.seed, (1ull << 32) + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    LossBreakdown train_acc;
    double seen = 0.0;
    std::size_t batch_idx = 0;
    std::vector<const EventSequence*> group;
    auto flush = [&]() {
      if (group.empty()) return;
      Batch batch = make_batch(group, trainable.num_types);
      group.clear();
      CounterRng rng(cfg.seed,
                     (2ull << 32) + static_cast<std::uint64_t>(epoch) * 1000003ull + batch_idx);
      ad::Tape tape;
      try {
        ad::Tape::Scope scope(tape);
        model.params().zero_grads();
        LossGraph g = elbo_loss(model, batch, cfg.mc_samples, ad::Mode::Train, rng);
        tape.backward(g.total);
        train_acc = weighted_add(train_acc, g.breakdown, batch.rows);
        seen += batch.rows;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFinite)
          raise(ErrorCode::NonFinite, "epoch " + std::to_string(epoch) + " batch " +
                                          std::to_string(batch_idx) + ": " + e.what());
        throw;
      }
      if (cfg.grad_clip_norm > 0.0) ad::clip_global_norm(param_tensors, cfg.grad_clip_norm);
      adam.step();
      ++batch_idx;
    };
    for (std::size_t i = 0; i < n; ++i) {
      group.push_back(&trainable.sequences[order[i]]);
      if (static_cast<int>(group.size()) == cfg.batch_size) flush();
    }
    flush();

    EpochLog log;
    log.epoch = epoch;
    log.train = scaled(train_acc, seen > 0 ? 1.0 / seen : 0.0);
    log.val = dataset_loss(model, val_batches, cfg.mc_samples, cfg.seed,
                           (3ull << 32) + static_cast<std::uint64_t>(epoch) * 1000003ull);
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    if (result.best_epoch < 0 || log.val.total < result.best_val_total) {
      result.best_epoch = epoch;
      result.best_val_total = log.val.total;
      result.best_params = model.params().snapshot_values();
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  set_nonfinite_checks(prev_checks);
  return result;
}

}  // namespace vntpp
