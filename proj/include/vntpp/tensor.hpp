#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vntpp/common.hpp"
#include "vntpp/rng.hpp"

namespace vntpp::ad {

// Dense row-major double tensor participating in reverse-mode
// differentiation. Copies share storage; the grad buffer lives beside the
// values and accumulates across backward passes until zeroed.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<int>& shape() const;
  std::size_t numel() const;
  int dim(int axis) const;
  int ndim() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);
  void ensure_grad();
  void zero_grad();

  double item() const;  // scalar tensors only

  // Identity of the underlying storage, for param bookkeeping.
  const void* id() const { return d_.get(); }

private:
  struct Data {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
  explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
};

// Records primitive applications in execution order; backward replays the
// closures in reverse. One tape per training thread.
class Tape {
public:
  class Scope {
  public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

  private:
    Tape* prev_;
  };

  static Tape* active();

  void record(std::function<void()> node);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse; the tape is
  // cleared afterwards. Throws NotScalar unless loss has exactly one element.
  void backward(Tensor& loss);

private:
  std::vector<std::function<void()>> nodes_;
};

// ---- primitive suite ----
// Each primitive computes eagerly and, when a tape is active and any input
// requires grad, records the exact vector-Jacobian product. Shape rules are
// documented per op; violations throw Shape with both shapes in the message.

// [m,k]@[k,n]; batched [B,m,k]@[B,k,n]; broadcast [B,m,k]@[k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise; b may also be a scalar or a vector matching a's last axis.
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
// Elementwise; either side may be a scalar.
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int length);
Tensor transpose(const Tensor& a, const std::vector<int>& perm);
Tensor reshape(const Tensor& a, std::vector<int> new_shape);
// table [V,D], ids in [0,V); output [ids_shape..., D].
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        const std::vector<int>& ids_shape);
Tensor softmax(const Tensor& a);      // last axis
Tensor log_softmax(const Tensor& a);  // last axis
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
// Normalizes the last axis; gamma/beta have that axis's length.
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
enum class Mode { Train, Eval };
// Inverted dropout: train scales retained entries by 1/keep_prob, eval is
// the identity. Mask draws come from rng in element order.
Tensor dropout(const Tensor& a, double keep_prob, Mode mode, CounterRng* rng);
Tensor sum(const Tensor& a);        // -> scalar
Tensor sum_last(const Tensor& a);   // [..., n] -> [...]
Tensor mean(const Tensor& a);       // -> scalar
Tensor mean_last(const Tensor& a);  // [..., n] -> [...]
// out[i] = fill where mask[i] != 0, else a[i]; mask length == numel.
Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask, double fill);
// [A, C] -> [A, M, C] by repetition; backward sums over the new axis.
Tensor repeat_mid(const Tensor& a, int m);

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }

  // Flat state for checkpointing: [step, m..., v...] per parameter order.
  std::vector<double> serialize_state() const;
  void restore_state(const std::vector<double>& blob);

private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

// Returns the pre-clip global norm; scales grads in place when above max_norm.
double clip_global_norm(const std::vector<Tensor>& params, double max_norm);

// ---- finite-difference gradient checking ----

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::vector<GradCheckEntry> per_param;
};

// f builds the scalar loss from the current parameter values. It is invoked
// once under a tape for backward grads and twice per coordinate for central
// differences, so it must be deterministic (fix any noise by seed).
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h, double tol);

}  // namespace vntpp::ad
