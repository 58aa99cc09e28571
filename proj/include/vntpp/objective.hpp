#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vntpp/data.hpp"
#include "vntpp/model.hpp"
#include "vntpp/tensor.hpp"

namespace vntpp {

struct LossBreakdown {
  double recon = 0.0;          // sum_i log p(event_i | z)
  double kl = 0.0;             // KL[q || prior], >= 0
  double event_loglik = 0.0;   // sum_i log lambda_{k_i}(t_i)
  double compensator = 0.0;    // integral of total intensity over the event span
  double total = 0.0;          // -(recon - kl + event_loglik - compensator)
};

struct TrainConfig {
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 5e-4;
  int mc_samples = 20;  // M
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;
  bool check_nonfinite = true;
};

// Eq.-20 style stratified Monte Carlo estimate of the compensator over the
// event span [t_1, t_L]: per inter-event interval, M uniform samples of the
// total intensity. u draws come from rng in (interval, sample) order.
double mc_compensator(const std::function<double(double)>& total_intensity,
                      const std::vector<double>& times, int mc_samples, CounterRng& rng);

struct LossGraph {
  ad::Tensor total;  // scalar tensor, minimized
  LossBreakdown breakdown;
};

// Assembles the per-batch loss: reconstruction + KL from the model, event
// log-intensities at the observed events, and the in-graph Monte Carlo
// compensator. All components are means over the batch's sequences.
LossGraph elbo_loss(const VntppModel& model, const Batch& batch, int mc_samples,
                    ad::Mode mode, CounterRng& rng);

struct EpochLog {
  int epoch = 0;
  LossBreakdown train;
  LossBreakdown val;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  int best_epoch = -1;
  double best_val_total = 0.0;
  std::vector<std::vector<double>> best_params;  // ParamStore snapshot
  std::size_t skipped_short_sequences = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Adam on -ELBO with per-epoch train/val logs; deterministic given the seed
// (shuffling, dropout, latent noise and MC draws all derive from it). The
// model keeps its final-epoch parameters; the best-val snapshot rides in the
// result. start_epoch > 0 resumes a run whose optimizer state was restored.
TrainResult train(VntppModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, ad::Adam& adam, int start_epoch = 0,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace vntpp
