#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vntpp/data.hpp"
#include "vntpp/encoder.hpp"
#include "vntpp/params.hpp"
#include "vntpp/tensor.hpp"

namespace vntpp {

enum class Variant { Linear, Exponential };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  int num_types = 2;  // K
  Variant variant = Variant::Linear;
  int latent_dim = 20;  // J
  EncoderConfig encoder;
  bool lognormal_gap = false;  // gap reconstruction: gaussian (default) or log-normal
  std::uint64_t seed = 1;
};

struct LatentPosterior {
  ad::Tensor mu;       // [B,L,J]
  ad::Tensor log_var;  // [B,L,J]
};

struct ModelForward {
  LatentPosterior posterior;
  ad::Tensor z;            // [B,L,J]
  ad::Tensor type_logits;  // [B,L,K]
  ad::Tensor time_pred;    // [B,L] predicted gap to the next event
};

// Inference + generative networks sharing one embedded, BOS-shifted input.
// Encoder output at position p conditions on events 0..p-1 only, so the
// posterior at p is the latent of the history before event p.
class VntppModel {
public:
  explicit VntppModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Shifted input embeddings [B,L,D] plus the key-validity mask (BOS always
  // valid, then the events each position carries).
  ad::Tensor shifted_embeddings(const Batch& batch, std::vector<std::uint8_t>* shifted_mask) const;

  ad::Tensor encode_inference(const Batch& batch, ad::Mode mode, CounterRng* rng) const;

  LatentPosterior infer_posterior(const ad::Tensor& hidden, int rows, int len) const;

  // Train: z = mu + sigma * eps (eps ~ N(0,I) from rng, or caller-supplied).
  // Eval: z = mu.
  ad::Tensor sample_latent(const LatentPosterior& post, ad::Mode mode, CounterRng* rng,
                           const ad::Tensor* eps = nullptr) const;

  // lambda rows [N,K] from latents z2 [N,J] and per-row elapsed time dt [N].
  ad::Tensor intensity_tensor(const ad::Tensor& z2, const std::vector<double>& dt) const;
  // Plain evaluation of the same head (no tape).
  std::vector<double> intensity_eval(const std::vector<double>& z, double dt) const;

  // Sum over unmasked positions of -1/2 sum_j (1 + log var - mu^2 - var).
  ad::Tensor kl_divergence(const LatentPosterior& post, const Batch& batch) const;

  // Generative pass: z projected to D, added to the shifted embeddings, run
  // through the generative encoder; heads emit next-type logits and the
  // next-gap prediction per position.
  void reconstruct(const ad::Tensor& z, const ad::Tensor& shifted,
                   const std::vector<std::uint8_t>& shifted_mask, const Batch& batch,
                   ad::Mode mode, CounterRng* rng, ad::Tensor* type_logits,
                   ad::Tensor* time_pred) const;

  ModelForward forward(const Batch& batch, ad::Mode mode, CounterRng* rng) const;

  // Eval-mode posterior means per prediction position of one sequence.
  // Position p predicts event p (0-based); with include_next an extra row
  // predicts the event after the observed sequence. t_last[p] is the
  // timestamp the elapsed time dt is measured from.
  struct EvalLatents {
    std::vector<std::vector<double>> mu_z;
    std::vector<double> t_last;
  };
  EvalLatents eval_latents(const EventSequence& seq, bool include_next = false) const;

private:
  ModelConfig cfg_;
  ParamStore store_;
  ad::Tensor embedding_;  // [(K+1), D], padding row last
  ad::Tensor bos_;        // [1, D]
  std::unique_ptr<TransformerEncoder> inf_encoder_;
  std::unique_ptr<TransformerEncoder> gen_encoder_;
  ad::Tensor w_mu_, b_mu_, w_lv_, b_lv_;      // posterior heads D->J
  ad::Tensor head_beta_, head_w_, head_alpha_;  // intensity head: [K], [J,K], [1,K]
  ad::Tensor z_proj_w_, z_proj_b_;            // J->D
  ad::Tensor type_w_, type_b_;                // D->K
  ad::Tensor time_w_, time_b_;                // D->1
};

}  // namespace vntpp
