#include "vntpp/encoder.hpp"

#include <cmath>

#include "vntpp/common.hpp"

namespace vntpp {

using ad::Tensor;

ad::Tensor ParamStore::add(const std::string& name, ad::Tensor t) {
  for (const auto& [existing, unused] : items_)
    if (existing == name) raise(ErrorCode::InvalidArgument, "duplicate parameter name: " + name);
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

ad::Tensor* ParamStore::find(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return &t;
  return nullptr;
}

const ad::Tensor* ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return &t;
  return nullptr;
}

std::vector<ad::Tensor> ParamStore::tensors() const {
  std::vector<ad::Tensor> out;
  out.reserve(items_.size());
  for (const auto& [n, t] : items_) out.push_back(t);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [n, t] : items_) t.zero_grad();
}

std::vector<std::vector<double>> ParamStore::snapshot_values() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(items_.size());
  for (const auto& [n, t] : items_) snap.push_back(t.values());
  return snap;
}

void ParamStore::restore_values(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != items_.size())
    raise(ErrorCode::Validation, "snapshot does not match parameter store");
  for (std::size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].size() != items_[i].second.numel())
      raise(ErrorCode::Validation, "snapshot shape mismatch at " + items_[i].first);
    items_[i].second.values() = snap[i];
  }
}

ad::Tensor xavier_uniform(std::vector<int> shape, CounterRng& rng) {
  const int fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
  const int fan_out = shape.back();
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data));
}

ad::Tensor normal_init(std::vector<int> shape, double stddev, CounterRng& rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> data(n);
  for (double& v : data) v = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(data));
}

std::vector<double> temporal_encoding(double t, int dim) {
  if (dim < 1) raise(ErrorCode::InvalidArgument, "temporal_encoding: dim must be >= 1");
  std::vector<double> pe(dim);
  for (int l = 0; l < dim; ++l) {
    if (l % 2 == 1)
      pe[l] = std::cos(t / std::pow(10000.0, static_cast<double>(l - 1) / dim));
    else
      pe[l] = std::sin(t / std::pow(10000.0, static_cast<double>(l) / dim));
  }
  return pe;
}

ad::Tensor temporal_encoding_matrix(const std::vector<double>& times, int rows, int len, int dim) {
  std::vector<double> data(static_cast<std::size_t>(rows) * len * dim);
  std::vector<double> inv_scale(dim);
  for (int l = 0; l < dim; ++l) {
    const int base = l % 2 == 1 ? l - 1 : l;
    inv_scale[l] = std::pow(10000.0, -static_cast<double>(base) / dim);
  }
  for (int i = 0; i < rows * len; ++i) {
    const double t = times[static_cast<std::size_t>(i)];
    double* row = data.data() + static_cast<std::size_t>(i) * dim;
    for (int l = 0; l < dim; ++l) {
      const double arg = t * inv_scale[l];
      row[l] = l % 2 == 1 ? std::cos(arg) : std::sin(arg);
    }
  }
  return Tensor::from_data({rows, len, dim}, std::move(data));
}

ad::Tensor embed_events(const std::vector<int>& types, const std::vector<double>& times,
                        int rows, int len, const ad::Tensor& table) {
  Tensor emb = ad::embedding_lookup(table, types, {rows, len});
  Tensor pe = temporal_encoding_matrix(times, rows, len, table.dim(1));
  return ad::add(emb, pe);
}

namespace {

std::vector<std::uint8_t> attention_disallow_mask(const std::vector<std::uint8_t>& mask,
                                                  int rows, int len, int heads) {
  // [(rows*heads), len, len]; 1 = forbidden (future position or padded key).
  std::vector<std::uint8_t> out(static_cast<std::size_t>(rows) * heads * len * len);
  for (int b = 0; b < rows; ++b)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < len; ++i) {
        std::uint8_t* row =
            out.data() + ((static_cast<std::size_t>(b) * heads + h) * len + i) * len;
        for (int j = 0; j < len; ++j)
          row[j] = (j > i || !mask[static_cast<std::size_t>(b) * len + j]) ? 1 : 0;
      }
  return out;
}

}  // namespace

ad::Tensor causal_self_attention(const ad::Tensor& x, const std::vector<std::uint8_t>& mask,
                                 int rows, int len, const EncoderConfig& cfg,
                                 const ad::Tensor& wq, const ad::Tensor& wk,
                                 const ad::Tensor& wv, const ad::Tensor& wo,
                                 ad::Mode mode, CounterRng* rng) {
  const int d = cfg.hidden_dim, h = cfg.num_heads, dk = cfg.head_dim;
  if (x.ndim() != 3 || x.dim(0) != rows || x.dim(1) != len || x.dim(2) != d)
    raise(ErrorCode::Shape, "attention: input must be [B,L,D]");
  Tensor x2 = ad::reshape(x, {rows * len, d});

  auto heads_of = [&](const Tensor& w) {
    Tensor proj = ad::matmul(x2, w);  // [B*L, H*dk]
    Tensor split = ad::reshape(proj, {rows, len, h, dk});
    Tensor swapped = ad::transpose(split, {0, 2, 1, 3});  // [B,H,L,dk]
    return ad::reshape(swapped, {rows * h, len, dk});
  };
  Tensor q3 = heads_of(wq);
  Tensor k3 = heads_of(wk);
  Tensor v3 = heads_of(wv);

  Tensor scores = ad::matmul(q3, ad::transpose(k3, {0, 2, 1}));
  scores = ad::scale(scores, 1.0 / std::sqrt(static_cast<double>(dk)));
  scores = ad::masked_fill(scores, attention_disallow_mask(mask, rows, len, h), -1e9);
  Tensor attn = ad::softmax(scores);
  attn = ad::dropout(attn, 1.0 - cfg.dropout, mode, rng);

  Tensor ctx = ad::matmul(attn, v3);                       // [(BH),L,dk]
  Tensor merged = ad::reshape(ctx, {rows, h, len, dk});
  merged = ad::transpose(merged, {0, 2, 1, 3});            // [B,L,H,dk]
  merged = ad::reshape(merged, {rows * len, h * dk});
  Tensor out = ad::matmul(merged, wo);                     // [B*L, D]
  return ad::reshape(out, {rows, len, d});
}

TransformerEncoder::TransformerEncoder(const EncoderConfig& cfg, const std::string& prefix,
                                       ParamStore& store, CounterRng& init_rng)
    : cfg_(cfg) {
  const int d = cfg.hidden_dim, hd = cfg.num_heads * cfg.head_dim, f = cfg.ffn_dim;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    Layer layer;
    layer.wq = store.add(p + "attn.wq", xavier_uniform({d, hd}, init_rng));
    layer.wk = store.add(p + "attn.wk", xavier_uniform({d, hd}, init_rng));
    layer.wv = store.add(p + "attn.wv", xavier_uniform({d, hd}, init_rng));
    layer.wo = store.add(p + "attn.wo", xavier_uniform({hd, d}, init_rng));
    layer.ln1_gamma = store.add(p + "ln1.gamma", Tensor::full({d}, 1.0));
    layer.ln1_beta = store.add(p + "ln1.beta", Tensor::zeros({d}));
    layer.ffn_w1 = store.add(p + "ffn.w1", xavier_uniform({d, f}, init_rng));
    layer.ffn_b1 = store.add(p + "ffn.b1", Tensor::zeros({f}));
    layer.ffn_w2 = store.add(p + "ffn.w2", xavier_uniform({f, d}, init_rng));
    layer.ffn_b2 = store.add(p + "ffn.b2", Tensor::zeros({d}));
    layer.ln2_gamma = store.add(p + "ln2.gamma", Tensor::full({d}, 1.0));
    layer.ln2_beta = store.add(p + "ln2.beta", Tensor::zeros({d}));
    layers_.push_back(std::move(layer));
  }
}

ad::Tensor TransformerEncoder::forward(const ad::Tensor& x, const std::vector<std::uint8_t>& mask,
                                       int rows, int len, ad::Mode mode, CounterRng* rng) const {
  const int d = cfg_.hidden_dim;
  const double keep = 1.0 - cfg_.dropout;
  Tensor h = x;
  for (const Layer& layer : layers_) {
    Tensor attn = causal_self_attention(h, mask, rows, len, cfg_, layer.wq, layer.wk,
                                        layer.wv, layer.wo, mode, rng);
    attn = ad::dropout(attn, keep, mode, rng);
    h = ad::layer_norm(ad::add(h, attn), layer.ln1_gamma, layer.ln1_beta);

    Tensor h2 = ad::reshape(h, {rows * len, d});
    Tensor mid = ad::relu(ad::add(ad::matmul(h2, layer.ffn_w1), layer.ffn_b1));
    Tensor ffn = ad::add(ad::matmul(mid, layer.ffn_w2), layer.ffn_b2);
    ffn = ad::dropout(ffn, keep, mode, rng);
    ffn = ad::reshape(ffn, {rows, len, d});
    h = ad::layer_norm(ad::add(h, ffn), layer.ln2_gamma, layer.ln2_beta);
  }
  // Zero padded positions so downstream heads see nothing there.
  std::vector<double> keep_mask(static_cast<std::size_t>(rows) * len * d);
  for (int i = 0; i < rows * len; ++i) {
    const double v = mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    for (int j = 0; j < d; ++j) keep_mask[static_cast<std::size_t>(i) * d + j] = v;
  }
  return ad::multiply(h, Tensor::from_data({rows, len, d}, std::move(keep_mask)));
}

}  // namespace vntpp
