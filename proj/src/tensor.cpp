#include "mast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace mast {

namespace {

std::string dims_str(const std::vector<int>& d) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
  os << ']';
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

std::int64_t product(const std::vector<int>& dims) {
  std::int64_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + dims_str(dims));
    n *= d;
  }
  return n;
}

void finalize(const char* op, Tensor& t) {
  round_span_to_mode(t.values());
  if (finite_checks_enabled()) {
    for (double v : t.values())
      if (!std::isfinite(v))
        throw ContractError(std::string(op) + ": produced non-finite output");
  }
}

thread_local Tape* g_active_tape = nullptr;

bool track(std::initializer_list<const Tensor*> operands) {
  if (!g_active_tape) return false;
  for (const Tensor* t : operands)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

std::span<double> grad_buf(const Tensor& t) {
  auto* im = t.impl();
  if (im->grad.empty()) im->grad.assign(im->data.size(), 0.0);
  return im->grad;
}

// grad += src, rounded per precision mode.
void axpy_into_grad(std::span<double> g, std::span<const double> src) {
  const Precision p = precision();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = round_to_mode(g[i] + src[i], p);
}

// ---------------------------------------------------------------------------
// GEMM kernels. Four accumulator rows in flight; inner loops use fma so the
// accumulation sequence per output element is fixed (bitwise reproducible).

template <class S>
void kernel_ab(const S* a, const S* b, S* y, int m, int k, int n) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const S *a0 = a + static_cast<std::size_t>(i) * k, *a1 = a0 + k, *a2 = a1 + k, *a3 = a2 + k;
    S *y0 = y + static_cast<std::size_t>(i) * n, *y1 = y0 + n, *y2 = y1 + n, *y3 = y2 + n;
    std::fill(y0, y0 + n, S(0));
    std::fill(y1, y1 + n, S(0));
    std::fill(y2, y2 + n, S(0));
    std::fill(y3, y3 + n, S(0));
    for (int kk = 0; kk < k; ++kk) {
      const S v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
      const S* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) {
        const S bv = bk[j];
        y0[j] = std::fma(v0, bv, y0[j]);
        y1[j] = std::fma(v1, bv, y1[j]);
        y2[j] = std::fma(v2, bv, y2[j]);
        y3[j] = std::fma(v3, bv, y3[j]);
      }
    }
  }
  for (; i < m; ++i) {
    const S* ai = a + static_cast<std::size_t>(i) * k;
    S* yi = y + static_cast<std::size_t>(i) * n;
    std::fill(yi, yi + n, S(0));
    for (int kk = 0; kk < k; ++kk) {
      const S av = ai[kk];
      const S* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) yi[j] = std::fma(av, bk[j], yi[j]);
    }
  }
}

// y[m,kb] = a[m,n] * b^T where b is [kb,n] (row-row dot products).
template <class S>
void kernel_abt(const S* a, const S* b, S* y, int m, int n, int kb) {
  for (int i = 0; i < m; ++i) {
    const S* ai = a + static_cast<std::size_t>(i) * n;
    S* yi = y + static_cast<std::size_t>(i) * kb;
    for (int j = 0; j < kb; ++j) {
      const S* bj = b + static_cast<std::size_t>(j) * n;
      S acc = S(0);
      for (int t = 0; t < n; ++t) acc = std::fma(ai[t], bj[t], acc);
      yi[j] = acc;
    }
  }
}

// y[ka,n] = a^T * b where a is [m,ka], b is [m,n] (rank-1 accumulation).
template <class S>
void kernel_atb(const S* a, const S* b, S* y, int m, int ka, int n) {
  std::fill(y, y + static_cast<std::size_t>(ka) * n, S(0));
  for (int t = 0; t < m; ++t) {
    const S* at = a + static_cast<std::size_t>(t) * ka;
    const S* bt = b + static_cast<std::size_t>(t) * n;
    for (int i = 0; i < ka; ++i) {
      const S av = at[i];
      S* yi = y + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) yi[j] = std::fma(av, bt[j], yi[j]);
    }
  }
}

enum class MM { ab, abt, atb };

thread_local std::vector<float> g_fa, g_fb, g_fy;

// Dispatch on precision mode: in f32 mode operands are rounded to float and
// the whole product runs in single precision.
void gemm(MM mode, const double* a, const double* b, double* y, int d0, int d1, int d2,
          std::size_t a_len, std::size_t b_len, std::size_t y_len) {
  if (precision() == Precision::f32) {
    g_fa.resize(a_len);
    g_fb.resize(b_len);
    g_fy.resize(y_len);
    for (std::size_t i = 0; i < a_len; ++i) g_fa[i] = static_cast<float>(a[i]);
    for (std::size_t i = 0; i < b_len; ++i) g_fb[i] = static_cast<float>(b[i]);
    switch (mode) {
      case MM::ab: kernel_ab(g_fa.data(), g_fb.data(), g_fy.data(), d0, d1, d2); break;
      case MM::abt: kernel_abt(g_fa.data(), g_fb.data(), g_fy.data(), d0, d1, d2); break;
      case MM::atb: kernel_atb(g_fa.data(), g_fb.data(), g_fy.data(), d0, d1, d2); break;
    }
    for (std::size_t i = 0; i < y_len; ++i) y[i] = static_cast<double>(g_fy[i]);
  } else {
    switch (mode) {
      case MM::ab: kernel_ab(a, b, y, d0, d1, d2); break;
      case MM::abt: kernel_abt(a, b, y, d0, d1, d2); break;
      case MM::atb: kernel_atb(a, b, y, d0, d1, d2); break;
    }
  }
}

void gemm_ab(const double* a, const double* b, double* y, int m, int k, int n) {
  gemm(MM::ab, a, b, y, m, k, n, static_cast<std::size_t>(m) * k, static_cast<std::size_t>(k) * n,
       static_cast<std::size_t>(m) * n);
}
void gemm_abt(const double* a, const double* b, double* y, int m, int n, int kb) {
  gemm(MM::abt, a, b, y, m, n, kb, static_cast<std::size_t>(m) * n,
       static_cast<std::size_t>(kb) * n, static_cast<std::size_t>(m) * kb);
}
void gemm_atb(const double* a, const double* b, double* y, int m, int ka, int n) {
  gemm(MM::atb, a, b, y, m, ka, n, static_cast<std::size_t>(m) * ka,
       static_cast<std::size_t>(m) * n, static_cast<std::size_t>(ka) * n);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::vector<int> dims, bool requires_grad) {
  auto im = std::make_shared<detail::TensorImpl>();
  im->data.assign(static_cast<std::size_t>(product(dims)), 0.0);
  im->dims = std::move(dims);
  im->requires_grad = requires_grad;
  return Tensor(std::move(im));
}

Tensor Tensor::full(std::vector<int> dims, double value) {
  Tensor t = zeros(std::move(dims));
  std::fill(t.values().begin(), t.values().end(), round_to_mode(value, precision()));
  return t;
}

Tensor Tensor::from(std::vector<int> dims, std::vector<double> data) {
  if (static_cast<std::int64_t>(data.size()) != product(dims))
    throw ShapeError("Tensor::from: " + dims_str(dims) + " needs " +
                     std::to_string(product(dims)) + " values, got " +
                     std::to_string(data.size()));
  auto im = std::make_shared<detail::TensorImpl>();
  im->dims = std::move(dims);
  im->data = std::move(data);
  round_span_to_mode(im->data);
  return Tensor(std::move(im));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

double Tensor::value() const {
  if (size() != 1) throw ContractError("Tensor::value: tensor has " + std::to_string(size()) +
                                       " elements, expected 1");
  return impl_->data[0];
}

namespace {
std::size_t flat_index(const std::vector<int>& dims, std::initializer_list<int> idx) {
  if (idx.size() != dims.size()) throw ShapeError("at: index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= dims[axis]) throw ShapeError("at: index out of range");
    flat = flat * static_cast<std::size_t>(dims[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return flat;
}
}  // namespace

double& Tensor::at(std::initializer_list<int> idx) {
  return impl_->data[flat_index(impl_->dims, idx)];
}
double Tensor::at(std::initializer_list<int> idx) const {
  return impl_->data[flat_index(impl_->dims, idx)];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }
Tape::~Tape() { g_active_tape = prev_; }
Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a scalar tensor");
  grad_buf(loss)[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

NoGradScope::NoGradScope() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = saved_; }

// ---------------------------------------------------------------------------
// Elementwise binary ops with limited broadcasting.

namespace {

enum class Bcast { same, scalar, row };

Bcast bcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dims() == b.dims()) return Bcast::same;
  if (b.size() == 1) return Bcast::scalar;
  if (b.rank() == 1 && a.rank() >= 2 && a.dim(a.rank() - 1) == b.dim(0)) return Bcast::row;
  shape_fail(op, "incompatible dims " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
}

template <class Fwd, class Bwd>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  const Bcast kind = bcast_kind(op, a, b);
  Tensor out = Tensor::zeros(a.dims());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  const std::size_t bn = static_cast<std::size_t>(b.size());
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double rhs = kind == Bcast::same ? bv[i] : kind == Bcast::scalar ? bv[0] : bv[i % bn];
    ov[i] = fwd(av[i], rhs);
  }
  finalize(op, out);
  if (track({&a, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto avc = a.values();
      auto bvc = b.values();
      std::span<double> ga = a.requires_grad() ? grad_buf(a) : std::span<double>();
      std::span<double> gb = b.requires_grad() ? grad_buf(b) : std::span<double>();
      const Precision p = precision();
      for (std::size_t i = 0; i < og.size(); ++i) {
        const std::size_t bi = kind == Bcast::same ? i : kind == Bcast::scalar ? 0 : i % bn;
        double da = 0.0, db = 0.0;
        bwd(avc[i], bvc[bi], og[i], da, db);
        if (!ga.empty()) ga[i] = round_to_mode(ga[i] + da, p);
        if (!gb.empty()) gb[bi] = round_to_mode(gb[bi] + db, p);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor affine(const Tensor& a, double c, double s) {
  Tensor out = Tensor::zeros(a.dims());
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c + s;
  finalize("affine", out);
  if (track({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto ga = grad_buf(a);
      const Precision p = precision();
      for (std::size_t i = 0; i < og.size(); ++i) ga[i] = round_to_mode(ga[i] + og[i] * c, p);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unary elementwise ops.

namespace {

// dfdx receives (x, y) so activations can reuse their output.
template <class Fwd, class Dfdx>
Tensor unary_op(const char* op, const Tensor& x, Fwd fwd, Dfdx dfdx) {
  Tensor out = Tensor::zeros(x.dims());
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
  finalize(op, out);
  if (track({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto xvc = x.values();
      auto ovc = out.values();
      auto gx = grad_buf(x);
      const Precision p = precision();
      for (std::size_t i = 0; i < og.size(); ++i)
        gx[i] = round_to_mode(gx[i] + og[i] * dfdx(xvc[i], ovc[i]), p);
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary_op(
      "clamp", x, [=](double v) { return v < lo ? lo : v > hi ? hi : v; },
      [=](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double g, double& da, double& db) {
        if (x <= y)
          da = g;
        else
          db = g;
      });
}

// ---------------------------------------------------------------------------
// matmul family

namespace {
void matmul_check(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    shape_fail(op, "expects rank-2 operands, got " + dims_str(a.dims()) + " and " +
                       dims_str(b.dims()));
  if (a.dim(1) != b.dim(0))
    shape_fail(op, "inner dims mismatch " + dims_str(a.dims()) + " x " + dims_str(b.dims()));
}

void record_matmul_backward(const Tensor& a, const Tensor& b, const Tensor& out) {
  Tape::active()->record([=]() {
    const auto& og = out.impl()->grad;
    if (og.empty()) return;
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    thread_local std::vector<double> scratch;
    if (a.requires_grad()) {
      scratch.resize(static_cast<std::size_t>(m) * k);
      gemm_abt(og.data(), b.values().data(), scratch.data(), m, n, k);
      axpy_into_grad(grad_buf(a), scratch);
    }
    if (b.requires_grad()) {
      scratch.resize(static_cast<std::size_t>(k) * n);
      gemm_atb(a.values().data(), og.data(), scratch.data(), m, k, n);
      axpy_into_grad(grad_buf(b), scratch);
    }
  });
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  matmul_check("matmul", a, b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  gemm_ab(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  finalize("matmul", out);
  if (track({&a, &b})) {
    out.set_requires_grad(true);
    record_matmul_backward(a, b, out);
  }
  return out;
}

Tensor matmul_stable(const Tensor& a, const Tensor& b) {
  matmul_check("matmul_stable", a, b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  thread_local std::vector<double> terms;
  terms.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int t = 0; t < k; ++t)
        terms[static_cast<std::size_t>(t)] =
            av[static_cast<std::size_t>(i) * k + t] * bv[static_cast<std::size_t>(t) * n + j];
      ov[static_cast<std::size_t>(i) * n + j] = stable_sum(terms);
    }
  }
  finalize("matmul_stable", out);
  if (track({&a, &b})) {
    out.set_requires_grad(true);
    record_matmul_backward(a, b, out);
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) shape_fail("transpose", "expects rank-2, got " + dims_str(a.dims()));
  const int m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  auto av = a.values();
  auto ov = out.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
  finalize("transpose", out);
  if (track({&a})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto ga = grad_buf(a);
      const Precision p = precision();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          auto& slot = ga[static_cast<std::size_t>(i) * n + j];
          slot = round_to_mode(slot + og[static_cast<std::size_t>(j) * m + i], p);
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d: x [H,W,Cin], w [KH,KW,Cin,Cout], valid padding. Lowered to an
// im2col buffer and a GEMM; the buffer is rebuilt in backward rather than
// kept alive across the tape.

namespace {
void im2col(std::span<const double> x, int /*H*/, int W, int C, int KH, int KW, int stride,
            int OH, int OW, std::vector<double>& cols) {
  cols.resize(static_cast<std::size_t>(OH) * OW * KH * KW * C);
  std::size_t p = 0;
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox)
      for (int ky = 0; ky < KH; ++ky) {
        const int iy = oy * stride + ky;
        const std::size_t row_base = (static_cast<std::size_t>(iy) * W + ox * stride) * C;
        const std::size_t len = static_cast<std::size_t>(KW) * C;
        std::memcpy(&cols[p], &x[row_base], len * sizeof(double));
        p += len;
      }
}
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1)
    shape_fail("conv2d", "expects x[H,W,C], w[KH,KW,Cin,Cout], b[Cout]; got " +
                             dims_str(x.dims()) + ", " + dims_str(w.dims()) + ", " +
                             dims_str(b.dims()));
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int KH = w.dim(0), KW = w.dim(1), WC = w.dim(2), Cout = w.dim(3);
  if (WC != C)
    shape_fail("conv2d", "input channels " + std::to_string(C) + " != kernel channels " +
                             std::to_string(WC));
  if (b.dim(0) != Cout) shape_fail("conv2d", "bias length != output channels");
  if (KH > H || KW > W)
    shape_fail("conv2d", "kernel " + dims_str(w.dims()) + " larger than input " +
                             dims_str(x.dims()));
  const int OH = (H - KH) / stride + 1;
  const int OW = (W - KW) / stride + 1;
  const int K = KH * KW * C;

  thread_local std::vector<double> cols;
  im2col(x.values(), 0, W, C, KH, KW, stride, OH, OW, cols);
  Tensor out = Tensor::zeros({OH, OW, Cout});
  gemm_ab(cols.data(), w.values().data(), out.values().data(), OH * OW, K, Cout);
  {
    auto ov = out.values();
    auto bval = b.values();
    for (int r = 0; r < OH * OW; ++r)
      for (int c = 0; c < Cout; ++c) ov[static_cast<std::size_t>(r) * Cout + c] += bval[c];
  }
  finalize("conv2d", out);

  if (track({&x, &w, &b})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      thread_local std::vector<double> bcols, scratch;
      if (b.requires_grad()) {
        auto gb = grad_buf(b);
        const Precision p = precision();
        for (int c = 0; c < Cout; ++c) {
          double s = 0.0;
          for (int r = 0; r < OH * OW; ++r) s += og[static_cast<std::size_t>(r) * Cout + c];
          gb[c] = round_to_mode(gb[c] + s, p);
        }
      }
      if (w.requires_grad()) {
        im2col(x.values(), 0, W, C, KH, KW, stride, OH, OW, bcols);
        scratch.resize(static_cast<std::size_t>(K) * Cout);
        gemm_atb(bcols.data(), og.data(), scratch.data(), OH * OW, K, Cout);
        axpy_into_grad(grad_buf(w), scratch);
      }
      if (x.requires_grad()) {
        scratch.resize(static_cast<std::size_t>(OH) * OW * K);
        gemm_abt(og.data(), w.values().data(), scratch.data(), OH * OW, Cout, K);
        auto gx = grad_buf(x);
        const Precision p = precision();
        std::size_t sp = 0;
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx)
                for (int c = 0; c < C; ++c) {
                  const std::size_t xi =
                      (static_cast<std::size_t>(oy * stride + ky) * W + ox * stride + kx) * C + c;
                  gx[xi] = round_to_mode(gx[xi] + scratch[sp++], p);
                }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / layer_norm / reductions

namespace {
// Computes softmax for one row gathered in `row`; writes probabilities back.
void softmax_row(std::span<double> row) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  for (double& v : row) v = std::exp(v - mx);
  const double z = stable_sum(std::span<const double>(row.data(), row.size()));
  for (double& v : row) v /= z;
}
}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() < 1 || x.rank() > 2)
    shape_fail("softmax", "expects rank 1 or 2, got " + dims_str(x.dims()));
  if (axis < 0 || axis >= x.rank()) throw ContractError("softmax: axis out of range");
  Tensor out = Tensor::zeros(x.dims());
  auto xv = x.values();
  auto ov = out.values();
  const int rows = x.rank() == 2 ? x.dim(0) : 1;
  const int cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
  thread_local std::vector<double> buf;
  auto run_lane = [&](int n, auto get_idx) {
    buf.resize(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) buf[static_cast<std::size_t>(t)] = xv[get_idx(t)];
    softmax_row(buf);
    for (int t = 0; t < n; ++t) ov[get_idx(t)] = buf[static_cast<std::size_t>(t)];
  };
  if (x.rank() == 1 || axis == 1) {
    for (int r = 0; r < rows; ++r)
      run_lane(cols, [&](int t) { return static_cast<std::size_t>(r) * cols + t; });
  } else {
    for (int c = 0; c < cols; ++c)
      run_lane(rows, [&](int t) { return static_cast<std::size_t>(t) * cols + c; });
  }
  finalize("softmax", out);
  if (track({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto ovc = out.values();
      auto gx = grad_buf(x);
      const Precision p = precision();
      auto bwd_lane = [&](int n, auto get_idx) {
        double dot = 0.0;
        for (int t = 0; t < n; ++t) dot += og[get_idx(t)] * ovc[get_idx(t)];
        for (int t = 0; t < n; ++t) {
          const std::size_t i = get_idx(t);
          gx[i] = round_to_mode(gx[i] + ovc[i] * (og[i] - dot), p);
        }
      };
      if (x.rank() == 1 || axis == 1) {
        for (int r = 0; r < rows; ++r)
          bwd_lane(cols, [&](int t) { return static_cast<std::size_t>(r) * cols + t; });
      } else {
        for (int c = 0; c < cols; ++c)
          bwd_lane(rows, [&](int t) { return static_cast<std::size_t>(t) * cols + c; });
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps < 0.0) throw ContractError("layer_norm: eps must be >= 0");
  const int n = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != n || beta.rank() != 1 || beta.dim(0) != n)
    shape_fail("layer_norm", "scale/shift must be [" + std::to_string(n) + "], got " +
                                 dims_str(gamma.dims()) + " and " + dims_str(beta.dims()));
  const int rows = static_cast<int>(x.size() / n);
  Tensor out = Tensor::zeros(x.dims());
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto ov = out.values();
  std::vector<double> inv_sigma(static_cast<std::size_t>(rows));
  std::vector<double> mu(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * n;
    double m = 0.0;
    for (int j = 0; j < n; ++j) m += xv[base + j];
    m /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xv[base + j] - m;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    mu[static_cast<std::size_t>(r)] = m;
    inv_sigma[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < n; ++j) ov[base + j] = (xv[base + j] - m) * is * gv[j] + bv[j];
  }
  finalize("layer_norm", out);
  if (track({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto xvc = x.values();
      auto gvc = gamma.values();
      const Precision p = precision();
      std::span<double> gx = x.requires_grad() ? grad_buf(x) : std::span<double>();
      std::span<double> gg = gamma.requires_grad() ? grad_buf(gamma) : std::span<double>();
      std::span<double> gb = beta.requires_grad() ? grad_buf(beta) : std::span<double>();
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * n;
        const double is = inv_sigma[static_cast<std::size_t>(r)];
        const double m = mu[static_cast<std::size_t>(r)];
        double mean_g = 0.0, mean_gx = 0.0;
        for (int j = 0; j < n; ++j) {
          const double xhat = (xvc[base + j] - m) * is;
          const double gj = og[base + j] * gvc[j];
          mean_g += gj;
          mean_gx += gj * xhat;
        }
        mean_g /= n;
        mean_gx /= n;
        for (int j = 0; j < n; ++j) {
          const double xhat = (xvc[base + j] - m) * is;
          if (!gg.empty()) gg[j] = round_to_mode(gg[j] + og[base + j] * xhat, p);
          if (!gb.empty()) gb[j] = round_to_mode(gb[j] + og[base + j], p);
          if (!gx.empty()) {
            const double gj = og[base + j] * gvc[j];
            gx[base + j] = round_to_mode(gx[base + j] + is * (gj - mean_g - xhat * mean_gx), p);
          }
        }
      }
    });
  }
  return out;
}

namespace {
Tensor reduce_mean(const char* op, const Tensor& x, int axis, bool stable) {
  if (x.rank() != 2) shape_fail(op, "expects rank-2, got " + dims_str(x.dims()));
  const int m = x.dim(0), n = x.dim(1);
  const int out_len = axis == 0 ? n : m;
  const int red = axis == 0 ? m : n;
  Tensor out = Tensor::zeros({out_len});
  auto xv = x.values();
  auto ov = out.values();
  thread_local std::vector<double> lane;
  for (int o = 0; o < out_len; ++o) {
    if (stable) {
      lane.resize(static_cast<std::size_t>(red));
      for (int t = 0; t < red; ++t)
        lane[static_cast<std::size_t>(t)] =
            axis == 0 ? xv[static_cast<std::size_t>(t) * n + o] : xv[static_cast<std::size_t>(o) * n + t];
      ov[o] = stable_sum(lane) / red;
    } else {
      double s = 0.0;
      for (int t = 0; t < red; ++t)
        s += axis == 0 ? xv[static_cast<std::size_t>(t) * n + o]
                       : xv[static_cast<std::size_t>(o) * n + t];
      ov[o] = s / red;
    }
  }
  finalize(op, out);
  if (track({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto gx = grad_buf(x);
      const Precision p = precision();
      for (int o = 0; o < out_len; ++o) {
        const double g = og[o] / red;
        for (int t = 0; t < red; ++t) {
          const std::size_t i = axis == 0 ? static_cast<std::size_t>(t) * n + o
                                          : static_cast<std::size_t>(o) * n + t;
          gx[i] = round_to_mode(gx[i] + g, p);
        }
      }
    });
  }
  return out;
}

Tensor reduce_all(const char* op, const Tensor& x, bool take_mean) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(take_mean ? s / n : s);
  finalize(op, out);
  if (track({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto gx = grad_buf(x);
      const double g = take_mean ? og[0] / n : og[0];
      const Precision p = precision();
      for (auto& v : gx) v = round_to_mode(v + g, p);
    });
  }
  return out;
}
}  // namespace

Tensor mean(const Tensor& x, int axis) {
  if (axis < 0 || axis > 1) throw ContractError("mean: axis out of range");
  return reduce_mean("mean", x, axis, false);
}

Tensor mean_axis0_stable(const Tensor& x) { return reduce_mean("mean_stable", x, 0, true); }

Tensor mean_all(const Tensor& x) { return reduce_all("mean_all", x, true); }
Tensor sum_all(const Tensor& x) { return reduce_all("sum_all", x, false); }

// ---------------------------------------------------------------------------
// concat / slice / reshape

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw ContractError("concat: axis out of range");
  if (rank != 1 && rank != 2) shape_fail("concat", "expects rank 1 or 2 inputs");
  std::vector<int> dims = parts[0].dims();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].rank() != rank) shape_fail("concat", "mixed ranks");
    for (int d = 0; d < rank; ++d)
      if (d != axis && parts[i].dim(d) != dims[static_cast<std::size_t>(d)])
        shape_fail("concat", "dims mismatch at input " + std::to_string(i) + ": " +
                                 dims_str(parts[i].dims()));
    dims[static_cast<std::size_t>(axis)] += parts[i].dim(axis);
  }
  Tensor out = Tensor::zeros(dims);
  auto ov = out.values();
  std::vector<Tensor> held(parts.begin(), parts.end());
  if (rank == 1 || axis == 0) {
    std::size_t off = 0;
    for (const Tensor& t : held) {
      auto tv = t.values();
      std::copy(tv.begin(), tv.end(), ov.begin() + static_cast<std::ptrdiff_t>(off));
      off += tv.size();
    }
  } else {
    const int rows = dims[0], total = dims[1];
    int col0 = 0;
    for (const Tensor& t : held) {
      const int w = t.dim(1);
      auto tv = t.values();
      for (int r = 0; r < rows; ++r)
        std::copy(tv.begin() + static_cast<std::ptrdiff_t>(r) * w,
                  tv.begin() + static_cast<std::ptrdiff_t>(r + 1) * w,
                  ov.begin() + static_cast<std::ptrdiff_t>(r) * total + col0);
      col0 += w;
    }
  }
  finalize("concat", out);
  bool any_grad = false;
  for (const Tensor& t : held)
    if (t.requires_grad()) any_grad = true;
  if (Tape::active() && any_grad) {
    out.set_requires_grad(true);
    const int rows = rank == 2 ? dims[0] : 1;
    const int total = rank == 2 ? dims[1] : 0;
    const bool along_rows = (rank == 1 || axis == 0);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      const Precision p = precision();
      if (along_rows) {
        std::size_t off = 0;
        for (const Tensor& t : held) {
          const std::size_t len = static_cast<std::size_t>(t.size());
          if (t.requires_grad()) {
            auto g = grad_buf(t);
            for (std::size_t i = 0; i < len; ++i) g[i] = round_to_mode(g[i] + og[off + i], p);
          }
          off += len;
        }
      } else {
        int col0 = 0;
        for (const Tensor& t : held) {
          const int w = t.dim(1);
          if (t.requires_grad()) {
            auto g = grad_buf(t);
            for (int r = 0; r < rows; ++r)
              for (int c = 0; c < w; ++c) {
                auto& slot = g[static_cast<std::size_t>(r) * w + c];
                slot = round_to_mode(slot + og[static_cast<std::size_t>(r) * total + col0 + c], p);
              }
          }
          col0 += w;
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  if (x.rank() != 1 && x.rank() != 2) shape_fail("slice", "expects rank 1 or 2");
  if (axis < 0 || axis >= x.rank()) throw ContractError("slice: axis out of range");
  if (start < 0 || len <= 0 || start + len > x.dim(axis))
    throw ContractError("slice: range [" + std::to_string(start) + "," +
                        std::to_string(start + len) + ") out of bounds for axis size " +
                        std::to_string(x.dim(axis)));
  std::vector<int> dims = x.dims();
  dims[static_cast<std::size_t>(axis)] = len;
  Tensor out = Tensor::zeros(dims);
  auto xv = x.values();
  auto ov = out.values();
  const int n = x.rank() == 2 ? x.dim(1) : 0;
  if (x.rank() == 1) {
    std::copy(xv.begin() + start, xv.begin() + start + len, ov.begin());
  } else if (axis == 0) {
    std::copy(xv.begin() + static_cast<std::ptrdiff_t>(start) * n,
              xv.begin() + static_cast<std::ptrdiff_t>(start + len) * n, ov.begin());
  } else {
    for (int r = 0; r < x.dim(0); ++r)
      std::copy(xv.begin() + static_cast<std::ptrdiff_t>(r) * n + start,
                xv.begin() + static_cast<std::ptrdiff_t>(r) * n + start + len,
                ov.begin() + static_cast<std::ptrdiff_t>(r) * len);
  }
  finalize("slice", out);
  if (track({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto gx = grad_buf(x);
      const Precision p = precision();
      if (x.rank() == 1) {
        for (int i = 0; i < len; ++i) {
          auto& slot = gx[static_cast<std::size_t>(start + i)];
          slot = round_to_mode(slot + og[static_cast<std::size_t>(i)], p);
        }
      } else if (axis == 0) {
        for (std::size_t i = 0; i < og.size(); ++i) {
          auto& slot = gx[static_cast<std::size_t>(start) * n + i];
          slot = round_to_mode(slot + og[i], p);
        }
      } else {
        for (int r = 0; r < x.dim(0); ++r)
          for (int c = 0; c < len; ++c) {
            auto& slot = gx[static_cast<std::size_t>(r) * n + start + c];
            slot = round_to_mode(slot + og[static_cast<std::size_t>(r) * len + c], p);
          }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> dims) {
  if (product(dims) != x.size())
    shape_fail("reshape", dims_str(x.dims()) + " -> " + dims_str(dims) + " changes element count");
  Tensor out = Tensor::from(std::move(dims), std::vector<double>(x.values().begin(), x.values().end()));
  if (track({&x})) {
    out.set_requires_grad(true);
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      axpy_into_grad(grad_buf(x), og);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// embeddings

Tensor embedding(const Tensor& table, std::span<const int> indices) {
  if (table.rank() != 2) shape_fail("embedding", "table must be rank-2");
  const int V = table.dim(0), D = table.dim(1);
  for (int id : indices)
    if (id < 0 || id >= V)
      throw ContractError("embedding: index " + std::to_string(id) + " out of table size " +
                          std::to_string(V));
  Tensor out = Tensor::zeros({static_cast<int>(indices.size()), D});
  auto tv = table.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy(tv.begin() + static_cast<std::ptrdiff_t>(indices[r]) * D,
              tv.begin() + static_cast<std::ptrdiff_t>(indices[r] + 1) * D,
              ov.begin() + static_cast<std::ptrdiff_t>(r) * D);
  finalize("embedding", out);
  if (track({&table})) {
    out.set_requires_grad(true);
    std::vector<int> idx(indices.begin(), indices.end());
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto gt = grad_buf(table);
      const Precision p = precision();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int d = 0; d < D; ++d) {
          auto& slot = gt[static_cast<std::size_t>(idx[r]) * D + d];
          slot = round_to_mode(slot + og[r * static_cast<std::size_t>(D) + d], p);
        }
    });
  }
  return out;
}

Tensor embedding_bag(const Tensor& table, const std::vector<std::vector<int>>& row_ids) {
  if (table.rank() != 2) shape_fail("embedding_bag", "table must be rank-2");
  const int V = table.dim(0), D = table.dim(1);
  Tensor out = Tensor::zeros({static_cast<int>(row_ids.size()), D});
  auto tv = table.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < row_ids.size(); ++r) {
    double* dst = &ov[r * static_cast<std::size_t>(D)];
    for (int id : row_ids[r]) {
      if (id < 0 || id >= V)
        throw ContractError("embedding_bag: index " + std::to_string(id) + " out of table size " +
                            std::to_string(V));
      const double* src = &tv[static_cast<std::size_t>(id) * D];
      for (int d = 0; d < D; ++d) dst[d] += src[d];
    }
  }
  finalize("embedding_bag", out);
  if (track({&table})) {
    out.set_requires_grad(true);
    auto ids = row_ids;
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto gt = grad_buf(table);
      const Precision p = precision();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (int id : ids[r])
          for (int d = 0; d < D; ++d) {
            auto& slot = gt[static_cast<std::size_t>(id) * D + d];
            slot = round_to_mode(slot + og[r * static_cast<std::size_t>(D) + d], p);
          }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// cross entropy

Tensor cross_entropy_with_logits(const Tensor& logits, std::span<const int> targets) {
  const bool batched = logits.rank() == 2;
  if (!batched && logits.rank() != 1)
    shape_fail("cross_entropy", "logits must be rank 1 or 2, got " + dims_str(logits.dims()));
  const int rows = batched ? logits.dim(0) : 1;
  const int k = batched ? logits.dim(1) : logits.dim(0);
  if (static_cast<int>(targets.size()) != rows)
    throw ContractError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(rows) + " rows");
  for (int t : targets)
    if (t < 0 || t >= k) throw ContractError("cross_entropy: target class out of range");
  Tensor out = batched ? Tensor::zeros({rows}) : Tensor::zeros({1});
  auto lv = logits.values();
  auto ov = out.values();
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * k;
    double mx = lv[base];
    for (int j = 1; j < k; ++j) mx = std::max(mx, lv[base + j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(lv[base + j] - mx);
    ov[r] = mx + std::log(z) - lv[base + targets[r]];
  }
  finalize("cross_entropy", out);
  if (track({&logits})) {
    out.set_requires_grad(true);
    std::vector<int> tg(targets.begin(), targets.end());
    Tape::active()->record([=]() {
      const auto& og = out.impl()->grad;
      if (og.empty()) return;
      auto lvc = logits.values();
      auto gl = grad_buf(logits);
      const Precision p = precision();
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * k;
        double mx = lvc[base];
        for (int j = 1; j < k; ++j) mx = std::max(mx, lvc[base + j]);
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(lvc[base + j] - mx);
        for (int j = 0; j < k; ++j) {
          const double soft = std::exp(lvc[base + j] - mx) / z;
          const double d = (soft - (j == tg[static_cast<std::size_t>(r)] ? 1.0 : 0.0)) * og[r];
          gl[base + j] = round_to_mode(gl[base + j] + d, p);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// init / finite differences

Tensor init_parameters(std::vector<int> dims, Init scheme, Rng& rng) {
  switch (scheme) {
    case Init::zeros:
      return Tensor::zeros(std::move(dims));
    case Init::fan_in_uniform: {
      Tensor t = Tensor::zeros(dims);
      const int last = dims.back();
      const double fan_in = static_cast<double>(product(dims) / last);
      const double a = std::sqrt(6.0 / std::max(1.0, fan_in));
      for (double& v : t.values()) v = rng.uniform(-a, a);
      round_span_to_mode(t.values());
      return t;
    }
    case Init::orthogonal: {
      if (dims.size() != 2)
        throw ContractError("init_parameters: orthogonal needs rank-2 dims, got " +
                            dims_str(dims));
      const int m = dims[0], n = dims[1];
      const bool by_rows = m <= n;
      const int vecs = by_rows ? m : n;
      const int len = by_rows ? n : m;
      // Modified Gram-Schmidt on Gaussian vectors.
      std::vector<std::vector<double>> basis(static_cast<std::size_t>(vecs),
                                             std::vector<double>(static_cast<std::size_t>(len)));
      for (auto& v : basis)
        for (double& x : v) x = rng.normal();
      for (int i = 0; i < vecs; ++i) {
        auto& vi = basis[static_cast<std::size_t>(i)];
        for (int j = 0; j < i; ++j) {
          const auto& vj = basis[static_cast<std::size_t>(j)];
          double dot = 0.0;
          for (int t = 0; t < len; ++t) dot += vi[static_cast<std::size_t>(t)] * vj[static_cast<std::size_t>(t)];
          for (int t = 0; t < len; ++t) vi[static_cast<std::size_t>(t)] -= dot * vj[static_cast<std::size_t>(t)];
        }
        double norm = 0.0;
        for (double x : vi) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw GenerationError("init_parameters: degenerate orthogonal draw");
        for (double& x : vi) x /= norm;
      }
      Tensor t = Tensor::zeros(dims);
      auto tv = t.values();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          tv[static_cast<std::size_t>(i) * n + j] =
              by_rows ? basis[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                      : basis[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      round_span_to_mode(tv);
      return t;
    }
  }
  throw ContractError("init_parameters: unknown scheme");
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double eps) {
  if (eps <= 0.0) throw ContractError("finite_diff_check: eps must be > 0");
  Tensor x = Tensor::from(point.dims(),
                          std::vector<double>(point.values().begin(), point.values().end()));
  x.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor y = f(x);
    tape.backward(y);
    analytic.assign(x.grad().begin(), x.grad().end());
  }
  double max_err = 0.0;
  auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double saved = xv[i];
    xv[i] = saved + eps;
    const double up = f(x).value();
    xv[i] = saved - eps;
    const double down = f(x).value();
    xv[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace mast
