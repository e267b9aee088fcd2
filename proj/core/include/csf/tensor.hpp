#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "csf/common.hpp"
#include "csf/rng.hpp"

namespace csf {

// Dense row-major tensor of doubles. Copies share storage (value-semantic
// handle); kernels allocate fresh outputs and never alias inputs. Every
// kernel validates that its output is finite: NaN/Inf raise immediately
// instead of propagating.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

  bool defined() const { return impl_ != nullptr; }
  int rank() const;
  const Shape& shape() const;
  Index size() const;
  Index dim(int axis) const;

  double* data();
  const double* data() const;
  std::vector<double>& values();
  const std::vector<double>& values() const;

  double& at(Index i);
  double& at(Index i, Index j);
  double& at(Index i, Index j, Index k);
  double at(Index i) const;
  double at(Index i, Index j) const;
  double at(Index i, Index j, Index k) const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  // Gradient buffer, same shape as data. Allocated zero-filled on first use.
  // Const: the buffer lives in the shared storage block, and backward
  // closures accumulate into it through const handles.
  std::vector<double>& grad() const;
  const std::vector<double>* grad_if_present() const;
  void zero_grad() const;

  // Same storage identity (for aliasing checks in tests).
  const void* id() const { return impl_.get(); }

  Tensor clone() const;     // deep copy, keeps requires_grad
  Tensor detached() const;  // shares values, never participates in a tape

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until touched
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& checked() const;
};

// Reverse-mode tape. Constructing a Tape makes it the active recorder for
// the current thread (scoped, nestable); kernels append one pull-back per
// primitive. backward() replays pulls in reverse recording order, which for
// a sequentially executed forward pass is reverse topological order.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> pull);
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss)=1 and accumulates into every requires_grad tensor
  // reachable from the loss. Gradients of independent uses add.
  void backward(const Tensor& loss);

  static Tape* active();

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* parent_ = nullptr;
};

// backward() through the innermost active tape; errors if none is active.
void backward(const Tensor& loss);

namespace detail {
bool grads_wanted(std::initializer_list<const Tensor*> inputs);
void check_finite(const Tensor& t, const char* op);
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural kernels
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor sum(const Tensor& a);  // -> scalar

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                // rank 2
Tensor swap_last2(const Tensor& a);               // rank >= 2, swaps trailing axes
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& a, int axis, Index start, Index length);
Tensor stack0(const std::vector<Tensor>& parts);  // new leading axis
Tensor select0(const Tensor& a, Index index);     // drop leading axis

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class GeluForm { Exact, Tanh };  // exact Gaussian CDF is the default

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_act(const Tensor& a);
Tensor gelu(const Tensor& a, GeluForm form = GeluForm::Exact);

// ---------------------------------------------------------------------------
// Neural-network kernels
// ---------------------------------------------------------------------------

// Output length of a 1-d cross-correlation; may be <= 0 for invalid setups.
Index conv1d_out_len(Index length, Index kernel, Index stride, Index dilation, Index padding);

// Cross-correlation (no kernel flip). x: [Cin,L] or [B,Cin,L],
// w: [Cout,Cin,k], b: [Cout]. Zero padding on both ends.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, Index stride, Index dilation,
              Index padding);

// x: [B,C,L]. Train mode normalizes with batch statistics over (B,L) and
// updates running stats in place via EMA (they are buffers, not tape nodes);
// eval mode uses the running stats. Running stats start at (0,1).
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, Mode mode, double eps = 1e-5, double momentum = 0.1);

// Normalizes over the trailing axis of any-rank input.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// x: [C,L] or [B,C,L]; argmax indices are kept for the backward pass.
Tensor maxpool1d(const Tensor& x, Index window, Index stride);

// Arithmetic mean over one axis (the axis is removed).
Tensor avgpool(const Tensor& x, int axis);

// x: [...,Din] (rank 2 or 3), w: [Dout,Din], optional bias [Dout].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr);

Tensor softmax(const Tensor& x, int axis);

// Inverted dropout: train mode zeroes entries with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng);

// ---------------------------------------------------------------------------
// Attention primitives
// ---------------------------------------------------------------------------

enum class MaskMode { SubtractDiag, NegInfDiag };

// logits: [S,S] or [H,S,S]. SubtractDiag zeroes the diagonal (A - diag(A));
// NegInfDiag writes a -1e30 sentinel that underflows to an exact 0 after the
// row softmax while keeping the tensor finite. Diagonal gradients are zero
// in both modes.
Tensor mask_diagonal(const Tensor& logits, MaskMode mode);

// Rotary positional embedding on [S,H,d] (d even): pair (2j,2j+1) of each
// head vector is rotated by pos * base^(-2j/d).
Tensor rope(const Tensor& x, const std::vector<Index>& positions, double base);

// q,k: [S,H,d] -> [H,S,S], scaled by 1/sqrt(d).
Tensor attention_logits(const Tensor& q, const Tensor& k);

// a: [H,S,S], v: [S,H,d] -> [S,H,d].
Tensor attention_apply(const Tensor& a, const Tensor& v);

// ---------------------------------------------------------------------------
// Debug dump format: u64 rank, u64 dims, then raw f64 values, little endian.
// ---------------------------------------------------------------------------

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace csf
