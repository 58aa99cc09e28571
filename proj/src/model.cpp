#include "vntpp/model.hpp"

#include <cmath>

#include "vntpp/common.hpp"

namespace vntpp {

using ad::Tensor;

std::string variant_name(Variant v) {
  return v == Variant::Linear ? "linear" : "exponential";
}

Variant variant_from_name(const std::string& name) {
  if (name == "linear") return Variant::Linear;
  if (name == "exponential") return Variant::Exponential;
  raise(ErrorCode::InvalidArgument, "unknown variant: " + name);
}

VntppModel::VntppModel(const ModelConfig& cfg) : cfg_(cfg) {
  const int k = cfg.num_types;
  const int d = cfg.encoder.hidden_dim;
  const int j = cfg.latent_dim;
  if (k < 1 || d < 1 || j < 1) raise(ErrorCode::InvalidArgument, "model dimensions must be positive");
  CounterRng rng(cfg.seed, /*stream=*/2);

  embedding_ = store_.add("embedding", normal_init({k + 1, d}, 1.0 / std::sqrt(d), rng));
  bos_ = store_.add("bos", normal_init({1, d}, 1.0 / std::sqrt(d), rng));
  inf_encoder_ = std::make_unique<TransformerEncoder>(cfg.encoder, "inf.", store_, rng);
  w_mu_ = store_.add("posterior.w_mu", xavier_uniform({d, j}, rng));
  b_mu_ = store_.add("posterior.b_mu", Tensor::zeros({j}));
  w_lv_ = store_.add("posterior.w_logvar", xavier_uniform({d, j}, rng));
  b_lv_ = store_.add("posterior.b_logvar", Tensor::zeros({j}));
  head_beta_ = store_.add("head.beta", Tensor::zeros({k}));
  head_w_ = store_.add("head.w", xavier_uniform({j, k}, rng));
  head_alpha_ = store_.add("head.alpha", Tensor::full({1, k}, 0.1));
  gen_encoder_ = std::make_unique<TransformerEncoder>(cfg.encoder, "gen.", store_, rng);
  z_proj_w_ = store_.add("gen.z_proj.w", xavier_uniform({j, d}, rng));
  z_proj_b_ = store_.add("gen.z_proj.b", Tensor::zeros({d}));
  type_w_ = store_.add("gen.type_head.w", xavier_uniform({d, k}, rng));
  type_b_ = store_.add("gen.type_head.b", Tensor::zeros({k}));
  time_w_ = store_.add("gen.time_head.w", xavier_uniform({d, 1}, rng));
  time_b_ = store_.add("gen.time_head.b", Tensor::zeros({1}));
}

ad::Tensor VntppModel::shifted_embeddings(const Batch& batch,
                                          std::vector<std::uint8_t>* shifted_mask) const {
  const int rows = batch.rows, len = batch.max_len, d = cfg_.encoder.hidden_dim;
  if (batch.num_types != cfg_.num_types)
    raise(ErrorCode::Validation, "batch K does not match model K");
  Tensor emb = embed_events(batch.types, batch.times, rows, len, embedding_);

  Tensor ones = Tensor::full({rows, 1}, 1.0);
  Tensor bos_block = ad::reshape(ad::matmul(ones, bos_), {rows, 1, d});
  Tensor shifted = len > 1
                       ? ad::concat({bos_block, ad::slice(emb, 1, 0, len - 1)}, 1)
                       : bos_block;
  if (shifted_mask != nullptr) {
    shifted_mask->assign(static_cast<std::size_t>(rows) * len, 0);
    for (int b = 0; b < rows; ++b) {
      (*shifted_mask)[static_cast<std::size_t>(b) * len] = 1;
      for (int p = 1; p < len; ++p)
        (*shifted_mask)[static_cast<std::size_t>(b) * len + p] = batch.mask[static_cast<std::size_t>(b) * len + p - 1];
    }
  }
  return shifted;
}

ad::Tensor VntppModel::encode_inference(const Batch& batch, ad::Mode mode, CounterRng* rng) const {
  std::vector<std::uint8_t> shifted_mask;
  Tensor shifted = shifted_embeddings(batch, &shifted_mask);
  return inf_encoder_->forward(shifted, shifted_mask, batch.rows, batch.max_len, mode, rng);
}

LatentPosterior VntppModel::infer_posterior(const ad::Tensor& hidden, int rows, int len) const {
  const int d = cfg_.encoder.hidden_dim, j = cfg_.latent_dim;
  Tensor h2 = ad::reshape(hidden, {rows * len, d});
  LatentPosterior post;
  post.mu = ad::reshape(ad::add(ad::matmul(h2, w_mu_), b_mu_), {rows, len, j});
  post.log_var = ad::reshape(ad::add(ad::matmul(h2, w_lv_), b_lv_), {rows, len, j});
  return post;
}

ad::Tensor VntppModel::sample_latent(const LatentPosterior& post, ad::Mode mode, CounterRng* rng,
                                     const ad::Tensor* eps) const {
  if (mode == ad::Mode::Eval) return post.mu;
  Tensor sigma = ad::exp(ad::scale(post.log_var, 0.5));
  Tensor noise;
  if (eps != nullptr) {
    noise = *eps;
  } else {
    if (rng == nullptr) raise(ErrorCode::InvalidArgument, "sample_latent: train mode needs an rng");
    std::vector<double> e(post.mu.numel());
    for (double& v : e) v = rng->normal();
    noise = Tensor::from_data(post.mu.shape(), std::move(e));
  }
  return ad::add(post.mu, ad::multiply(sigma, noise));
}

ad::Tensor VntppModel::intensity_tensor(const ad::Tensor& z2, const std::vector<double>& dt) const {
  const int n = z2.dim(0);
  if (static_cast<std::size_t>(n) != dt.size())
    raise(ErrorCode::Shape, "intensity_tensor: dt length does not match latent rows");
  Tensor wz = ad::matmul(z2, head_w_);           // [N,K]
  Tensor base = ad::add(wz, head_beta_);         // + beta_k
  Tensor dt_col = Tensor::from_data({n, 1}, dt);
  Tensor alpha_dt = ad::matmul(dt_col, head_alpha_);  // [N,K]
  Tensor arg = cfg_.variant == Variant::Linear
                   ? ad::subtract(base, alpha_dt)
                   : ad::add(base, ad::exp(ad::scale(alpha_dt, -1.0)));
  return ad::softplus(arg);
}

std::vector<double> VntppModel::intensity_eval(const std::vector<double>& z, double dt) const {
  const int k = cfg_.num_types, j = cfg_.latent_dim;
  if (static_cast<int>(z.size()) != j)
    raise(ErrorCode::Shape, "intensity_eval: latent size mismatch");
  const auto& w = head_w_.values();       // [J,K]
  const auto& beta = head_beta_.values(); // [K]
  const auto& alpha = head_alpha_.values();
  std::vector<double> lambda(k);
  for (int t = 0; t < k; ++t) {
    double arg = beta[t];
    for (int d = 0; d < j; ++d) arg += z[d] * w[static_cast<std::size_t>(d) * k + t];
    if (cfg_.variant == Variant::Linear)
      arg -= alpha[t] * dt;
    else
      arg += std::exp(-alpha[t] * dt);
    lambda[t] = std::max(arg, 0.0) + std::log1p(std::exp(-std::abs(arg)));
  }
  return lambda;
}

ad::Tensor VntppModel::kl_divergence(const LatentPosterior& post, const Batch& batch) const {
  // -1/2 (1 + log var - mu^2 - var) per latent dim, summed over dims and
  // unmasked positions.
  Tensor mu2 = ad::multiply(post.mu, post.mu);
  Tensor var = ad::exp(post.log_var);
  Tensor inner = ad::subtract(ad::add(mu2, var), ad::add(post.log_var, Tensor::scalar(1.0)));
  Tensor per_pos = ad::scale(ad::sum_last(inner), 0.5);  // [B,L]
  std::vector<double> m(batch.mask.begin(), batch.mask.end());
  Tensor mask_t = Tensor::from_data({batch.rows, batch.max_len}, std::move(m));
  return ad::sum(ad::multiply(per_pos, mask_t));
}

void VntppModel::reconstruct(const ad::Tensor& z, const ad::Tensor& shifted,
                             const std::vector<std::uint8_t>& shifted_mask, const Batch& batch,
                             ad::Mode mode, CounterRng* rng, ad::Tensor* type_logits,
                             ad::Tensor* time_pred) const {
  const int rows = batch.rows, len = batch.max_len;
  const int d = cfg_.encoder.hidden_dim, j = cfg_.latent_dim, k = cfg_.num_types;
  Tensor z2 = ad::reshape(z, {rows * len, j});
  Tensor zp = ad::add(ad::matmul(z2, z_proj_w_), z_proj_b_);
  Tensor gen_in = ad::add(shifted, ad::reshape(zp, {rows, len, d}));
  Tensor hidden = gen_encoder_->forward(gen_in, shifted_mask, rows, len, mode, rng);
  Tensor h2 = ad::reshape(hidden, {rows * len, d});
  if (type_logits != nullptr)
    *type_logits = ad::reshape(ad::add(ad::matmul(h2, type_w_), type_b_), {rows, len, k});
  if (time_pred != nullptr)
    *time_pred = ad::reshape(ad::add(ad::matmul(h2, time_w_), time_b_), {rows, len});
}

ModelForward VntppModel::forward(const Batch& batch, ad::Mode mode, CounterRng* rng) const {
  std::vector<std::uint8_t> shifted_mask;
  Tensor shifted = shifted_embeddings(batch, &shifted_mask);
  Tensor hidden = inf_encoder_->forward(shifted, shifted_mask, batch.rows, batch.max_len, mode, rng);
  ModelForward out;
  out.posterior = infer_posterior(hidden, batch.rows, batch.max_len);
  out.z = sample_latent(out.posterior, mode, rng);
  reconstruct(out.z, shifted, shifted_mask, batch, mode, rng, &out.type_logits, &out.time_pred);
  return out;
}

VntppModel::EvalLatents VntppModel::eval_latents(const EventSequence& seq, bool include_next) const {
  const int n = static_cast<int>(seq.size());
  const int len = include_next ? n + 1 : n;
  Batch batch;
  batch.rows = 1;
  batch.max_len = len;
  batch.num_types = cfg_.num_types;
  batch.types.assign(len, cfg_.num_types);
  batch.times.assign(len, 0.0);
  batch.mask.assign(len, 0);
  for (int p = 0; p < n; ++p) {
    batch.types[p] = seq.events[p].type;
    batch.times[p] = seq.events[p].time;
    batch.mask[p] = 1;
  }
  Tensor hidden = encode_inference(batch, ad::Mode::Eval, nullptr);
  LatentPosterior post = infer_posterior(hidden, 1, len);

  EvalLatents out;
  const int j = cfg_.latent_dim;
  const auto& mu = post.mu.values();
  out.mu_z.resize(len);
  out.t_last.resize(len);
  for (int p = 0; p < len; ++p) {
    out.mu_z[p].assign(mu.begin() + static_cast<std::size_t>(p) * j,
                       mu.begin() + static_cast<std::size_t>(p + 1) * j);
    out.t_last[p] = p == 0 ? 0.0 : seq.events[p - 1].time;
  }
  return out;
}

}  // namespace vntpp
