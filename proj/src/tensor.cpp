#include "vntpp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace vntpp::ad {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const std::vector<int>& a, const std::vector<int>& b) {
  raise(ErrorCode::Shape, std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void check_finite(const char* op, const std::vector<double>& v) {
  if (!nonfinite_checks_enabled()) return;
  for (double x : v)
    if (!std::isfinite(x)) raise(ErrorCode::NonFinite, std::string(op) + ": non-finite output");
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// C (+)= A[m,k] @ B[k,n]
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  if (!acc) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * n);
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 262144)
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (+)= A[m,k] @ B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 262144)
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double dot = 0.0;
      for (int p = 0; p < k; ++p) dot += ai[p] * bj[p];
      ci[j] = acc ? ci[j] + dot : dot;
    }
  }
}

// C (+)= A[k,m]^T @ B[k,n]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  if (!acc) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * n);
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * m;
    const double* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

thread_local Tape* g_active_tape = nullptr;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace

// ---- Tensor ----

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from_data(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  return from_data(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  for (int d : shape)
    if (d <= 0) raise(ErrorCode::Shape, "tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    raise(ErrorCode::Shape, "data size " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->value = std::move(data);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(d->value.size(), 0.0);
  return Tensor(std::move(d));
}

const std::vector<int>& Tensor::shape() const { return d_->shape; }
std::size_t Tensor::numel() const { return d_->value.size(); }
int Tensor::dim(int axis) const { return d_->shape.at(static_cast<std::size_t>(axis)); }
int Tensor::ndim() const { return static_cast<int>(d_->shape.size()); }
std::vector<double>& Tensor::values() { return d_->value; }
const std::vector<double>& Tensor::values() const { return d_->value; }
std::vector<double>& Tensor::grad() { return d_->grad; }
const std::vector<double>& Tensor::grad() const { return d_->grad; }
bool Tensor::requires_grad() const { return d_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  d_->requires_grad = v;
  if (v) ensure_grad();
}

void Tensor::ensure_grad() {
  if (d_->grad.size() != d_->value.size()) d_->grad.assign(d_->value.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) raise(ErrorCode::NotScalar, "item() on tensor of shape " + shape_str(d_->shape));
  return d_->value[0];
}

// ---- Tape ----

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> node) { nodes_.push_back(std::move(node)); }

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) raise(ErrorCode::NotScalar, "backward: loss must be scalar");
  loss.ensure_grad();
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  clear();
}

namespace {

// Allocates the output; the caller records its VJP closure when the result
// ends up requiring grad.
Tensor make_result(const char* op, std::vector<int> shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs) {
  check_finite(op, value);
  const bool track = tracking(inputs);
  Tensor out = Tensor::from_data(std::move(shape), std::move(value), track);
  if (track)
    for (const Tensor* t : inputs)
      if (t->defined() && t->requires_grad()) const_cast<Tensor*>(t)->ensure_grad();
  return out;
}

}  // namespace

// ---- primitives ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() == 2) {
    // [..., k] @ [k, n]
    if (sa.empty() || sa.back() != sb[0]) shape_error("matmul", sa, sb);
    const int k = sb[0], n = sb[1];
    const int m = static_cast<int>(a.numel()) / k;
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n, false);
    std::vector<int> out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    Tensor result = make_result("matmul", out_shape, std::move(out), {&a, &b});
    if (result.requires_grad()) {
      Tensor r = result, aa = a, bb = b;
      g_active_tape->record([r, aa, bb, m, k, n]() mutable {
        if (aa.requires_grad())
          gemm_nt(r.grad().data(), bb.values().data(), aa.grad().data(), m, n, k, true);
        if (bb.requires_grad())
          gemm_tn(aa.values().data(), r.grad().data(), bb.grad().data(), n, m, k, true);
      });
    }
    return result;
  }
  if (sa.size() == 3 && sb.size() == 3) {
    if (sa[0] != sb[0] || sa[2] != sb[1]) shape_error("matmul", sa, sb);
    const int batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
    std::vector<double> out(static_cast<std::size_t>(batch) * m * n);
    for (int t = 0; t < batch; ++t)
      gemm_nn(a.values().data() + static_cast<std::size_t>(t) * m * k,
              b.values().data() + static_cast<std::size_t>(t) * k * n,
              out.data() + static_cast<std::size_t>(t) * m * n, m, k, n, false);
    Tensor result = make_result("matmul", {batch, m, n}, std::move(out), {&a, &b});
    if (result.requires_grad()) {
      Tensor r = result, aa = a, bb = b;
      g_active_tape->record([r, aa, bb, batch, m, k, n]() mutable {
        for (int t = 0; t < batch; ++t) {
          const double* gout = r.grad().data() + static_cast<std::size_t>(t) * m * n;
          if (aa.requires_grad())
            gemm_nt(gout, bb.values().data() + static_cast<std::size_t>(t) * k * n,
                    aa.grad().data() + static_cast<std::size_t>(t) * m * k, m, n, k, true);
          if (bb.requires_grad())
            gemm_tn(aa.values().data() + static_cast<std::size_t>(t) * m * k, gout,
                    bb.grad().data() + static_cast<std::size_t>(t) * k * n, n, m, k, true);
        }
      });
    }
    return result;
  }
  shape_error("matmul", sa, sb);
}

namespace {

enum class BroadcastKind { Same, ScalarRhs, LastAxisRhs };

BroadcastKind addsub_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return BroadcastKind::Same;
  if (b.numel() == 1) return BroadcastKind::ScalarRhs;
  if (b.ndim() == 1 && !a.shape().empty() && b.dim(0) == a.shape().back())
    return BroadcastKind::LastAxisRhs;
  shape_error(op, a.shape(), b.shape());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const BroadcastKind kind = addsub_kind("add", a, b);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  if (kind == BroadcastKind::Same)
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  else if (kind == BroadcastKind::ScalarRhs)
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[0];
  else {
    const std::size_t last = static_cast<std::size_t>(b.dim(0));
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i % last];
  }
  Tensor result = make_result("add", a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    Tensor r = result, aa = a, bb = b;
    g_active_tape->record([r, aa, bb, kind, n]() mutable {
      const auto& g = r.grad();
      if (aa.requires_grad()) {
        auto& ga = aa.grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bb.requires_grad()) {
        auto& gb = bb.grad();
        if (kind == BroadcastKind::Same)
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        else if (kind == BroadcastKind::ScalarRhs)
          for (std::size_t i = 0; i < n; ++i) gb[0] += g[i];
        else {
          const std::size_t last = gb.size();
          for (std::size_t i = 0; i < n; ++i) gb[i % last] += g[i];
        }
      }
    });
  }
  return result;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  const BroadcastKind kind = addsub_kind("subtract", a, b);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  if (kind == BroadcastKind::Same)
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
  else if (kind == BroadcastKind::ScalarRhs)
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[0];
  else {
    const std::size_t last = static_cast<std::size_t>(b.dim(0));
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i % last];
  }
  Tensor result = make_result("subtract", a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    Tensor r = result, aa = a, bb = b;
    g_active_tape->record([r, aa, bb, kind, n]() mutable {
      const auto& g = r.grad();
      if (aa.requires_grad()) {
        auto& ga = aa.grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bb.requires_grad()) {
        auto& gb = bb.grad();
        if (kind == BroadcastKind::Same)
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        else if (kind == BroadcastKind::ScalarRhs)
          for (std::size_t i = 0; i < n; ++i) gb[0] -= g[i];
        else {
          const std::size_t last = gb.size();
          for (std::size_t i = 0; i < n; ++i) gb[i % last] -= g[i];
        }
      }
    });
  }
  return result;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) shape_error("multiply", a.shape(), b.shape());
  const Tensor& big = a_scalar ? b : a;
  const std::size_t n = big.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  if (a_scalar)
    for (std::size_t i = 0; i < n; ++i) out[i] = av[0] * bv[i];
  else if (b_scalar)
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[0];
  else
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
  Tensor result = make_result("multiply", big.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    Tensor r = result, aa = a, bb = b;
    g_active_tape->record([r, aa, bb, a_scalar, b_scalar, n]() mutable {
      const auto& g = r.grad();
      const auto& av = aa.values();
      const auto& bv = bb.values();
      if (aa.requires_grad()) {
        auto& ga = aa.grad();
        if (a_scalar)
          for (std::size_t i = 0; i < n; ++i) ga[0] += g[i] * bv[i];
        else if (b_scalar)
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[0];
        else
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
      }
      if (bb.requires_grad()) {
        auto& gb = bb.grad();
        if (b_scalar)
          for (std::size_t i = 0; i < n; ++i) gb[0] += g[i] * av[i];
        else if (a_scalar)
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[0];
        else
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& a, double c) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = c * av[i];
  Tensor result = make_result("scale", a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, c, n]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i) ga[i] += c * g[i];
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) raise(ErrorCode::InvalidArgument, "concat: no inputs");
  const auto& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    raise(ErrorCode::Shape, "concat: axis out of range for " + shape_str(s0));
  int total_axis = 0;
  for (const Tensor& p : parts) {
    const auto& sp = p.shape();
    if (sp.size() != s0.size()) shape_error("concat", s0, sp);
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (static_cast<int>(d) != axis && sp[d] != s0[d]) shape_error("concat", s0, sp);
    total_axis += sp[axis];
  }
  std::vector<int> out_shape = s0;
  out_shape[axis] = total_axis;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(s0[d]);
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= static_cast<std::size_t>(s0[d]);

  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t len = static_cast<std::size_t>(p.dim(axis)) * inner;
    const auto& pv = p.values();
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * (static_cast<std::size_t>(total_axis) * inner) + offset,
                  pv.data() + o * len, len * sizeof(double));
    offset += len;
  }
  std::vector<const Tensor*> refs;
  for (const Tensor& p : parts) refs.push_back(&p);
  const bool track = g_active_tape != nullptr &&
                     std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  check_finite("concat", out);
  Tensor result = Tensor::from_data(out_shape, std::move(out), track);
  if (track) {
    std::vector<Tensor> owned = parts;
    for (Tensor& t : owned)
      if (t.requires_grad()) t.ensure_grad();
    Tensor r = result;
    const std::size_t row = static_cast<std::size_t>(total_axis) * inner;
    g_active_tape->record([r, owned, outer, inner, row]() mutable {
      const auto& g = r.grad();
      std::size_t offset = 0;
      for (Tensor& t : owned) {
        const std::size_t plen = t.numel() / outer;
        if (t.requires_grad()) {
          auto& gt = t.grad();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < plen; ++i) gt[o * plen + i] += g[o * row + offset + i];
        }
        offset += plen;
      }
    });
  }
  return result;
}

Tensor slice(const Tensor& a, int axis, int start, int length) {
  const auto& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    raise(ErrorCode::Shape, "slice: axis out of range for " + shape_str(s));
  if (start < 0 || length < 1 || start + length > s[axis])
    raise(ErrorCode::Shape, "slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + length) + ") outside axis of size " +
                                std::to_string(s[axis]));
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(s[d]);
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= static_cast<std::size_t>(s[d]);
  std::vector<int> out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * length * inner);
  const auto& av = a.values();
  const std::size_t in_row = static_cast<std::size_t>(s[axis]) * inner;
  const std::size_t out_row = static_cast<std::size_t>(length) * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_row, av.data() + o * in_row + start * inner,
                out_row * sizeof(double));
  Tensor result = make_result("slice", out_shape, std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, outer, inner, in_row, out_row, start]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < out_row; ++i)
          ga[o * in_row + static_cast<std::size_t>(start) * inner + i] += g[o * out_row + i];
    });
  }
  return result;
}

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
  const auto& s = a.shape();
  const int nd = static_cast<int>(s.size());
  if (static_cast<int>(perm.size()) != nd)
    raise(ErrorCode::Shape, "transpose: perm rank mismatch for " + shape_str(s));
  std::vector<int> seen(nd, 0), out_shape(nd);
  for (int d = 0; d < nd; ++d) {
    if (perm[d] < 0 || perm[d] >= nd || seen[perm[d]]++)
      raise(ErrorCode::Shape, "transpose: invalid permutation");
    out_shape[d] = s[perm[d]];
  }
  std::vector<std::size_t> in_strides(nd, 1), out_strides(nd, 1);
  for (int d = nd - 2; d >= 0; --d) {
    in_strides[d] = in_strides[d + 1] * static_cast<std::size_t>(s[d + 1]);
    out_strides[d] = out_strides[d + 1] * static_cast<std::size_t>(out_shape[d + 1]);
  }
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  // Per output element, map back to the input offset.
  std::vector<std::size_t> src_stride_for_out(nd);
  for (int d = 0; d < nd; ++d) src_stride_for_out[d] = in_strides[perm[d]];
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i, src = 0;
    for (int d = 0; d < nd; ++d) {
      const std::size_t q = rem / out_strides[d];
      rem -= q * out_strides[d];
      src += q * src_stride_for_out[d];
    }
    out[i] = av[src];
  }
  Tensor result = make_result("transpose", out_shape, std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, out_strides, src_stride_for_out, n, nd]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t rem = i, src = 0;
        for (int d = 0; d < nd; ++d) {
          const std::size_t q = rem / out_strides[d];
          rem -= q * out_strides[d];
          src += q * src_stride_for_out[d];
        }
        ga[src] += g[i];
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a.numel())
    shape_error("reshape", a.shape(), new_shape);
  Tensor result = make_result("reshape", new_shape, a.values(), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        const std::vector<int>& ids_shape) {
  if (table.ndim() != 2) raise(ErrorCode::Shape, "embedding_lookup: table must be 2-D, got " + shape_str(table.shape()));
  if (ids.size() != shape_numel(ids_shape))
    raise(ErrorCode::Shape, "embedding_lookup: ids size does not match ids_shape");
  const int vocab = table.dim(0), width = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= vocab)
      raise(ErrorCode::IndexOutOfRange,
            "embedding_lookup: id " + std::to_string(id) + " outside [0," + std::to_string(vocab) + ")");
  std::vector<int> out_shape = ids_shape;
  out_shape.push_back(width);
  std::vector<double> out(ids.size() * static_cast<std::size_t>(width));
  const auto& tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.data() + i * width, tv.data() + static_cast<std::size_t>(ids[i]) * width,
                sizeof(double) * width);
  Tensor result = make_result("embedding_lookup", out_shape, std::move(out), {&table});
  if (result.requires_grad()) {
    Tensor r = result, tt = table;
    g_active_tape->record([r, tt, ids, width]() mutable {
      const auto& g = r.grad();
      auto& gt = tt.grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < width; ++j)
          gt[static_cast<std::size_t>(ids[i]) * width + j] += g[i * width + j];
    });
  }
  return result;
}

namespace {

Tensor rowwise_softmax(const Tensor& a, bool log_variant) {
  const auto& s = a.shape();
  if (s.empty()) raise(ErrorCode::Shape, "softmax: needs at least one axis");
  const int width = s.back();
  const std::size_t rows = a.numel() / static_cast<std::size_t>(width);
  std::vector<double> out(a.numel());
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double* y = out.data() + r * width;
    double mx = x[0];
    for (int j = 1; j < width; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < width; ++j) z += std::exp(x[j] - mx);
    if (log_variant) {
      const double lz = std::log(z) + mx;
      for (int j = 0; j < width; ++j) y[j] = x[j] - lz;
    } else {
      for (int j = 0; j < width; ++j) y[j] = std::exp(x[j] - mx) / z;
    }
  }
  const char* op = log_variant ? "log_softmax" : "softmax";
  Tensor result = make_result(op, s, std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, rows, width, log_variant]() mutable {
      const auto& g = r.grad();
      const auto& y = r.values();
      auto& ga = aa.grad();
      for (std::size_t row = 0; row < rows; ++row) {
        const double* gr = g.data() + row * width;
        const double* yr = y.data() + row * width;
        double* gar = ga.data() + row * width;
        if (log_variant) {
          double gsum = 0.0;
          for (int j = 0; j < width; ++j) gsum += gr[j];
          for (int j = 0; j < width; ++j) gar[j] += gr[j] - std::exp(yr[j]) * gsum;
        } else {
          double dot = 0.0;
          for (int j = 0; j < width; ++j) dot += gr[j] * yr[j];
          for (int j = 0; j < width; ++j) gar[j] += yr[j] * (gr[j] - dot);
        }
      }
    });
  }
  return result;
}

}  // namespace

Tensor softmax(const Tensor& a) { return rowwise_softmax(a, false); }
Tensor log_softmax(const Tensor& a) { return rowwise_softmax(a, true); }

Tensor softplus(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::max(av[i], 0.0) + std::log1p(std::exp(-std::abs(av[i])));
  Tensor result = make_result("softplus", a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, n]() mutable {
      const auto& g = r.grad();
      const auto& av = aa.values();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * sigmoid(av[i]);
    });
  }
  return result;
}

Tensor exp(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(av[i]);
  Tensor result = make_result("exp", a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, n]() mutable {
      const auto& g = r.grad();
      const auto& y = r.values();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
    });
  }
  return result;
}

Tensor log(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(av[i]);
  Tensor result = make_result("log", a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, n]() mutable {
      const auto& g = r.grad();
      const auto& av = aa.values();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / av[i];
    });
  }
  return result;
}

Tensor relu(const Tensor& a) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  Tensor result = make_result("relu", a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, n]() mutable {
      const auto& g = r.grad();
      const auto& av = aa.values();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i)
        if (av[i] > 0.0) ga[i] += g[i];
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto& s = a.shape();
  const int width = s.back();
  if (gamma.ndim() != 1 || gamma.dim(0) != width) shape_error("layer_norm", s, gamma.shape());
  if (beta.ndim() != 1 || beta.dim(0) != width) shape_error("layer_norm", s, beta.shape());
  const std::size_t rows = a.numel() / static_cast<std::size_t>(width);
  std::vector<double> out(a.numel());
  std::vector<double> xhat(a.numel());
  std::vector<double> inv_std(rows);
  const auto& av = a.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double mean = 0.0;
    for (int j = 0; j < width; ++j) mean += x[j];
    mean /= width;
    double var = 0.0;
    for (int j = 0; j < width; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= width;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (int j = 0; j < width; ++j) {
      const double xh = (x[j] - mean) * istd;
      xhat[r * width + j] = xh;
      out[r * width + j] = xh * gv[j] + bv[j];
    }
  }
  Tensor result = make_result("layer_norm", s, std::move(out), {&a, &gamma, &beta});
  if (result.requires_grad()) {
    Tensor r = result, aa = a, gg = gamma, bb = beta;
    auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    g_active_tape->record([r, aa, gg, bb, xh, istd, rows, width]() mutable {
      const auto& g = r.grad();
      const auto& gv = gg.values();
      for (std::size_t row = 0; row < rows; ++row) {
        const double* gr = g.data() + row * width;
        const double* xr = xh->data() + row * width;
        if (gg.requires_grad() || bb.requires_grad()) {
          auto& ggrad = gg.grad();
          auto& bgrad = bb.grad();
          for (int j = 0; j < width; ++j) {
            if (gg.requires_grad()) ggrad[j] += gr[j] * xr[j];
            if (bb.requires_grad()) bgrad[j] += gr[j];
          }
        }
        if (aa.requires_grad()) {
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < width; ++j) {
            const double dxh = gr[j] * gv[j];
            m1 += dxh;
            m2 += dxh * xr[j];
          }
          m1 /= width;
          m2 /= width;
          auto& ga = aa.grad();
          const double is = (*istd)[row];
          for (int j = 0; j < width; ++j) {
            const double dxh = gr[j] * gv[j];
            ga[row * width + j] += (dxh - m1 - xr[j] * m2) * is;
          }
        }
      }
    });
  }
  return result;
}

Tensor dropout(const Tensor& a, double keep_prob, Mode mode, CounterRng* rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    raise(ErrorCode::InvalidArgument, "dropout: keep probability must be in (0, 1]");
  if (mode == Mode::Eval || keep_prob == 1.0) return a;
  if (rng == nullptr) raise(ErrorCode::InvalidArgument, "dropout: train mode needs an rng");
  const std::size_t n = a.numel();
  auto mask = std::make_shared<std::vector<double>>(n);
  const double inv = 1.0 / keep_prob;
  for (std::size_t i = 0; i < n; ++i) (*mask)[i] = rng->uniform() < keep_prob ? inv : 0.0;
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * (*mask)[i];
  Tensor result = make_result("dropout", a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, mask, n]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (*mask)[i];
    });
  }
  return result;
}

namespace {

Tensor reduce_all(const char* op, const Tensor& a, bool take_mean) {
  const std::size_t n = a.numel();
  double total = 0.0;
  for (double v : a.values()) total += v;
  if (take_mean) total /= static_cast<double>(n);
  Tensor result = make_result(op, {1}, {total}, {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    const double w = take_mean ? 1.0 / static_cast<double>(n) : 1.0;
    g_active_tape->record([r, aa, w, n]() mutable {
      const double g = r.grad()[0] * w;
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return result;
}

Tensor reduce_last(const char* op, const Tensor& a, bool take_mean) {
  const auto& s = a.shape();
  const int width = s.back();
  const std::size_t rows = a.numel() / static_cast<std::size_t>(width);
  std::vector<int> out_shape(s.begin(), s.end() - 1);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(rows, 0.0);
  const auto& av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double t = 0.0;
    for (int j = 0; j < width; ++j) t += av[r * width + j];
    out[r] = take_mean ? t / width : t;
  }
  Tensor result = make_result(op, out_shape, std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    const double w = take_mean ? 1.0 / width : 1.0;
    g_active_tape->record([r, aa, w, rows, width]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (std::size_t row = 0; row < rows; ++row)
        for (int j = 0; j < width; ++j) ga[row * width + j] += g[row] * w;
    });
  }
  return result;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_all("sum", a, false); }
Tensor mean(const Tensor& a) { return reduce_all("mean", a, true); }
Tensor sum_last(const Tensor& a) { return reduce_last("sum_last", a, false); }
Tensor mean_last(const Tensor& a) { return reduce_last("mean_last", a, true); }

Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& mask, double fill) {
  const std::size_t n = a.numel();
  if (mask.size() != n)
    raise(ErrorCode::Shape, "masked_fill: mask size " + std::to_string(mask.size()) +
                                " does not match tensor " + shape_str(a.shape()));
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = mask[i] ? fill : av[i];
  Tensor result = make_result("masked_fill", a.shape(), std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    auto m = std::make_shared<std::vector<std::uint8_t>>(mask);
    g_active_tape->record([r, aa, m, n]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (std::size_t i = 0; i < n; ++i)
        if (!(*m)[i]) ga[i] += g[i];
    });
  }
  return result;
}

Tensor repeat_mid(const Tensor& a, int m) {
  if (a.ndim() != 2) raise(ErrorCode::Shape, "repeat_mid: input must be 2-D, got " + shape_str(a.shape()));
  if (m < 1) raise(ErrorCode::InvalidArgument, "repeat_mid: m must be >= 1");
  const int rows = a.dim(0), width = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows) * m * width);
  const auto& av = a.values();
  for (int r = 0; r < rows; ++r)
    for (int t = 0; t < m; ++t)
      std::memcpy(out.data() + (static_cast<std::size_t>(r) * m + t) * width,
                  av.data() + static_cast<std::size_t>(r) * width, sizeof(double) * width);
  Tensor result = make_result("repeat_mid", {rows, m, width}, std::move(out), {&a});
  if (result.requires_grad()) {
    Tensor r = result, aa = a;
    g_active_tape->record([r, aa, rows, m, width]() mutable {
      const auto& g = r.grad();
      auto& ga = aa.grad();
      for (int row = 0; row < rows; ++row)
        for (int t = 0; t < m; ++t)
          for (int j = 0; j < width; ++j)
            ga[static_cast<std::size_t>(row) * width + j] +=
                g[(static_cast<std::size_t>(row) * m + t) * width + j];
    });
  }
  return result;
}

// ---- Adam ----

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p];
    t.ensure_grad();
    const auto& g = t.grad();
    auto& val = t.values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

std::vector<double> Adam::serialize_state() const {
  std::vector<double> blob;
  blob.push_back(static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    blob.insert(blob.end(), m_[p].begin(), m_[p].end());
    blob.insert(blob.end(), v_[p].begin(), v_[p].end());
  }
  return blob;
}

void Adam::restore_state(const std::vector<double>& blob) {
  std::size_t expect = 1;
  for (const Tensor& p : params_) expect += 2 * p.numel();
  if (blob.size() != expect)
    raise(ErrorCode::Validation, "optimizer state size mismatch");
  step_ = static_cast<long>(blob[0]);
  std::size_t at = 1;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    std::copy(blob.begin() + at, blob.begin() + at + m_[p].size(), m_[p].begin());
    at += m_[p].size();
    std::copy(blob.begin() + at, blob.begin() + at + v_[p].size(), v_[p].begin());
    at += v_[p].size();
  }
}

double clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const Tensor& p : params)
      for (double& g : const_cast<std::vector<double>&>(p.grad())) g *= s;
  }
  return norm;
}

// ---- grad check ----

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h, double tol) {
  if (!(h >= 1e-7 && h <= 1e-3))
    raise(ErrorCode::InvalidArgument, "grad_check: h must lie in [1e-7, 1e-3]");
  for (const auto& [name, p] : params) const_cast<Tensor&>(p).zero_grad();

  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, p] : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    GradCheckEntry entry;
    entry.name = params[pi].first;
    auto& vals = p.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = f().item();
      vals[i] = orig - h;
      const double down = f().item();
      vals[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[pi][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(fd - an) / denom);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace vntpp::ad
