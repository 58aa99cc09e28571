#pragma once

#include <string>
#include <vector>

#include "vntpp/data.hpp"
#include "vntpp/params.hpp"
#include "vntpp/tensor.hpp"

namespace vntpp {

struct EncoderConfig {
  int hidden_dim = 64;   // D
  int num_heads = 4;     // H
  int head_dim = 16;     // d_k = d_v (projections map D -> head_dim per head)
  int num_layers = 2;
  double dropout = 0.1;
  int ffn_dim = 256;
};

// Sinusoidal encoding of an absolute timestamp (element l: odd -> cos,
// even -> sin of t scaled by 10000^(l or l-1 over D)).
std::vector<double> temporal_encoding(double t, int dim);

// Constant [B, L, D] tensor of temporal encodings for a padded time matrix.
ad::Tensor temporal_encoding_matrix(const std::vector<double>& times, int rows, int len, int dim);

// U row per type id (padding row included); output h = U[k] + PE(t).
ad::Tensor embed_events(const std::vector<int>& types, const std::vector<double>& times,
                        int rows, int len, const ad::Tensor& table);

// Causal post-norm Transformer stack: per layer, masked multi-head
// self-attention and a position-wise FFN, each wrapped in residual +
// layer norm. Position j never sees positions > j or padded keys; padded
// outputs are zeroed.
class TransformerEncoder {
public:
  TransformerEncoder(const EncoderConfig& cfg, const std::string& prefix,
                     ParamStore& store, CounterRng& init_rng);

  // mask: rows*len flags, 1 = real event.
  ad::Tensor forward(const ad::Tensor& x, const std::vector<std::uint8_t>& mask,
                     int rows, int len, ad::Mode mode, CounterRng* rng) const;

  const EncoderConfig& config() const { return cfg_; }

private:
  struct Layer {
    ad::Tensor wq, wk, wv, wo;
    ad::Tensor ln1_gamma, ln1_beta;
    ad::Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    ad::Tensor ln2_gamma, ln2_beta;
  };
  EncoderConfig cfg_;
  std::vector<Layer> layers_;
};

// Standalone causal multi-head attention, the Eq.-style core of the layer.
ad::Tensor causal_self_attention(const ad::Tensor& x, const std::vector<std::uint8_t>& mask,
                                 int rows, int len, const EncoderConfig& cfg,
                                 const ad::Tensor& wq, const ad::Tensor& wk,
                                 const ad::Tensor& wv, const ad::Tensor& wo,
                                 ad::Mode mode, CounterRng* rng);

}  // namespace vntpp
