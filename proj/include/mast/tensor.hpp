#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mast/common.hpp"

namespace mast {

namespace detail {
struct TensorImpl {
  std::vector<int> dims;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches this tensor
  bool requires_grad = false;
};
}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor: a dense row-major array of 64-bit floats with value-semantic
// handles over shared storage. Gradients accumulate in-place during a tape
// backward pass.

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> dims, bool requires_grad = false);
  static Tensor full(std::vector<int> dims, double value);
  static Tensor from(std::vector<int> dims, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& dims() const { return impl_->dims; }
  int rank() const { return static_cast<int>(impl_->dims.size()); }
  int dim(int i) const { return impl_->dims[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<double> values() { return impl_->data; }
  std::span<const double> values() const { return impl_->data; }
  /// Value of a one-element tensor.
  double value() const;
  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  /// Gradient accumulated by the last backward pass; zeros if untouched.
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape: define-by-run computation graph. Ops append nodes while a tape is
// active and any operand requires gradients; backward() replays the nodes in
// reverse, visiting each exactly once. One tape is active per thread.

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward_fn);
  std::size_t node_count() const { return nodes_.size(); }

  /// Seed d(loss)/d(loss) = 1 and sweep the graph in reverse. The loss must
  /// be a scalar produced under this tape.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* prev_ = nullptr;
};

// Temporarily disable recording on the active tape (constant subgraphs).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();

 private:
  Tape* saved_;
};

// ---------------------------------------------------------------------------
// Ops. Unless noted, inputs keep their dims and outputs are freshly
// allocated. Shape violations raise ShapeError naming the op.

/// Elementwise a+b. b may match a, be a scalar, or match a's trailing axis
/// (row broadcast, e.g. bias over the last axis of a matrix).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a * c + s for scalar constants (no graph node for c, s).
Tensor affine(const Tensor& a, double c, double s = 0.0);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// matmul whose accumulation over the inner axis is order-invariant: the
/// result is bitwise-identical under any permutation applied jointly to a's
/// columns and b's rows.
Tensor matmul_stable(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // 2-D

/// x: [H,W,Cin], w: [KH,KW,Cin,Cout], b: [Cout]; valid padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor minimum(const Tensor& a, const Tensor& b);

/// Softmax along `axis` of a 1-D or 2-D tensor. Rows sum to 1; the
/// normalizer uses order-invariant summation.
Tensor softmax(const Tensor& x, int axis);

/// Normalize over the last axis with population statistics:
/// y = (x - mean) / sqrt(var + eps) * gamma + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Mean over `axis` of a 2-D tensor (axis 0 -> [n], axis 1 -> [m]).
Tensor mean(const Tensor& x, int axis);
Tensor mean_all(const Tensor& x);  // scalar
Tensor sum_all(const Tensor& x);   // scalar
/// Mean over axis 0 with order-invariant accumulation (row-permutation safe).
Tensor mean_axis0_stable(const Tensor& x);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor reshape(const Tensor& x, std::vector<int> dims);

/// table: [V,D]; gathers rows -> [n,D].
Tensor embedding(const Tensor& table, std::span<const int> indices);
/// Sums a (possibly empty) set of table rows per output row -> [n,D].
Tensor embedding_bag(const Tensor& table, const std::vector<std::vector<int>>& row_ids);

/// logits [n,k] with n targets -> per-row losses [n]; or [k] with one target
/// -> scalar. loss = logsumexp(logits) - logits[target].
Tensor cross_entropy_with_logits(const Tensor& logits, std::span<const int> targets);

// ---------------------------------------------------------------------------
// Parameter initialization and gradient checking.

enum class Init { zeros, fan_in_uniform, orthogonal };

/// zeros: all 0. fan_in_uniform: U(-a, a) with a = sqrt(6/fan_in) where
/// fan_in is the product of all dims but the last. orthogonal: rank-2 only;
/// rows orthonormal when rows <= cols, else columns orthonormal.
Tensor init_parameters(std::vector<int> dims, Init scheme, Rng& rng);

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// f must be deterministic and produce a scalar.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double eps);

}  // namespace mast
