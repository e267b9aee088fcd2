#include "csf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace csf {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kSqrt2OverPi = 0.79788456080286535588;
constexpr double kMaskSentinel = -1e30;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
  }
}

thread_local Tape* g_active_tape = nullptr;

// Appends a pull-back to the innermost tape when one is active and any input
// carries gradient. Returns true when the closure was recorded, so callers
// can skip capturing state for inference-only calls.
bool record_if_needed(std::initializer_list<const Tensor*> inputs, std::function<void()> pull) {
  Tape* tape = Tape::active();
  if (tape == nullptr || !detail::grads_wanted(inputs)) return false;
  tape->record(std::move(pull));
  return true;
}

void mark_output(Tensor& out, std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() != nullptr && detail::grads_wanted(inputs)) out.set_requires_grad(true);
}

// Output gradient buffer, or nullptr when nothing ever flowed into it.
const std::vector<double>* out_grad(const Tensor& t) {
  const std::vector<double>* g = t.grad_if_present();
  if (g == nullptr || g->empty()) return nullptr;
  return g;
}

}  // namespace

namespace detail {

bool grads_wanted(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void check_finite(const Tensor& t, const char* op) {
  const double* p = t.data();
  const Index n = t.size();
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw std::runtime_error(std::string(op) + ": non-finite value at flat index " +
                               std::to_string(i));
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Impl& Tensor::checked() const {
  if (!impl_) throw std::runtime_error("tensor: use of a default-constructed tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  Index n = shape_size(shape);
  require(n >= 0, "tensor: negative dimension in " + shape_to_string(shape));
  impl->shape = std::move(shape);
  impl->values.assign(static_cast<std::size_t>(n), 0.0);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return full(Shape{}, value); }

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  Index n = shape_size(shape);
  require(static_cast<Index>(values.size()) == n,
          "tensor: value count " + std::to_string(values.size()) + " does not match shape " +
              shape_to_string(shape));
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

int Tensor::rank() const { return static_cast<int>(checked().shape.size()); }
const Shape& Tensor::shape() const { return checked().shape; }
Index Tensor::size() const { return static_cast<Index>(checked().values.size()); }

Index Tensor::dim(int axis) const {
  const Shape& s = checked().shape;
  require(axis >= 0 && axis < static_cast<int>(s.size()),
          "tensor: axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
  return s[static_cast<std::size_t>(axis)];
}

double* Tensor::data() { return checked().values.data(); }
const double* Tensor::data() const { return checked().values.data(); }
std::vector<double>& Tensor::values() { return checked().values; }
const std::vector<double>& Tensor::values() const { return checked().values; }

double& Tensor::at(Index i) { return checked().values[static_cast<std::size_t>(i)]; }
double Tensor::at(Index i) const { return checked().values[static_cast<std::size_t>(i)]; }

double& Tensor::at(Index i, Index j) {
  Impl& s = checked();
  return s.values[static_cast<std::size_t>(i * s.shape[1] + j)];
}
double Tensor::at(Index i, Index j) const {
  const Impl& s = checked();
  return s.values[static_cast<std::size_t>(i * s.shape[1] + j)];
}

double& Tensor::at(Index i, Index j, Index k) {
  Impl& s = checked();
  return s.values[static_cast<std::size_t>((i * s.shape[1] + j) * s.shape[2] + k)];
}
double Tensor::at(Index i, Index j, Index k) const {
  const Impl& s = checked();
  return s.values[static_cast<std::size_t>((i * s.shape[1] + j) * s.shape[2] + k)];
}

double Tensor::item() const {
  require(size() == 1, "tensor: item() needs a single-element tensor, got " +
                           shape_to_string(shape()));
  return checked().values[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  checked().requires_grad = value;
  return *this;
}

std::vector<double>& Tensor::grad() const {
  Impl& s = checked();
  if (s.grad.size() != s.values.size()) s.grad.assign(s.values.size(), 0.0);
  return s.grad;
}

const std::vector<double>* Tensor::grad_if_present() const {
  const Impl& s = checked();
  return s.grad.empty() ? nullptr : &s.grad;
}

void Tensor::zero_grad() const {
  Impl& s = checked();
  std::fill(s.grad.begin(), s.grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  const Impl& s = checked();
  auto impl = std::make_shared<Impl>();
  impl->shape = s.shape;
  impl->values = s.values;
  impl->requires_grad = s.requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::detached() const {
  const Impl& s = checked();
  auto impl = std::make_shared<Impl>();
  impl->shape = s.shape;
  impl->values = s.values;
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Tape() : parent_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = parent_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> pull) { nodes_.push_back(std::move(pull)); }

void Tape::backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1,
          "backward: loss must be a single-element tensor");
  if (!loss.requires_grad()) {
    throw std::runtime_error("backward: loss does not depend on any tracked parameter");
  }
  Tensor seed = loss;  // shared storage; grad lives on the impl
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw std::runtime_error("backward: no active tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Elementwise and structural kernels
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Dfn>
Tensor unary_pointwise(const Tensor& a, const char* op, Fwd f, Dfn dfn) {
  Tensor out = Tensor::zeros(a.shape());
  const double* x = a.data();
  double* y = out.data();
  const Index n = a.size();
  for (Index i = 0; i < n; ++i) y[i] = f(x[i]);
  detail::check_finite(out, op);
  mark_output(out, {&a});
  record_if_needed({&a}, [a, out, dfn]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !a.requires_grad()) return;
    std::vector<double>& dx = a.grad();
    const double* x = a.data();
    const double* y = out.data();
    const Index n = a.size();
    for (Index i = 0; i < n; ++i) dx[static_cast<std::size_t>(i)] += (*dy)[static_cast<std::size_t>(i)] * dfn(x[i], y[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const Index n = a.size();
  for (Index i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  detail::check_finite(out, "add");
  mark_output(out, {&a, &b});
  record_if_needed({&a, &b}, [a, b, out]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr) return;
    const std::size_t n = dy->size();
    if (a.requires_grad()) {
      std::vector<double>& da = a.grad();
      for (std::size_t i = 0; i < n; ++i) da[i] += (*dy)[i];
    }
    if (b.requires_grad()) {
      std::vector<double>& db = b.grad();
      for (std::size_t i = 0; i < n; ++i) db[i] += (*dy)[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const Index n = a.size();
  for (Index i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  detail::check_finite(out, "sub");
  mark_output(out, {&a, &b});
  record_if_needed({&a, &b}, [a, b, out]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr) return;
    const std::size_t n = dy->size();
    if (a.requires_grad()) {
      std::vector<double>& da = a.grad();
      for (std::size_t i = 0; i < n; ++i) da[i] += (*dy)[i];
    }
    if (b.requires_grad()) {
      std::vector<double>& db = b.grad();
      for (std::size_t i = 0; i < n; ++i) db[i] -= (*dy)[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const Index n = a.size();
  for (Index i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  detail::check_finite(out, "mul");
  mark_output(out, {&a, &b});
  record_if_needed({&a, &b}, [a, b, out]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr) return;
    const std::size_t n = dy->size();
    if (a.requires_grad()) {
      std::vector<double>& da = a.grad();
      const double* bv = b.data();
      for (std::size_t i = 0; i < n; ++i) da[i] += (*dy)[i] * bv[i];
    }
    if (b.requires_grad()) {
      std::vector<double>& db = b.grad();
      const double* av = a.data();
      for (std::size_t i = 0; i < n; ++i) db[i] += (*dy)[i] * av[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  return unary_pointwise(a, "scale", [c](double x) { return x * c; },
                         [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_pointwise(a, "add_scalar", [c](double x) { return x + c; },
                         [](double, double) { return 1.0; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  const Index n = a.size();
  for (Index i = 0; i < n; ++i) total += a.data()[i];
  Tensor out = Tensor::scalar(total);
  detail::check_finite(out, "sum");
  mark_output(out, {&a});
  record_if_needed({&a}, [a, out]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !a.requires_grad()) return;
    const double g = (*dy)[0];
    std::vector<double>& da = a.grad();
    for (double& v : da) v += g;
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: expects rank-2 inputs, got " +
                                              shape_to_string(a.shape()) + " and " +
                                              shape_to_string(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                       shape_to_string(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  for (Index i = 0; i < m; ++i) {
    for (Index t = 0; t < k; ++t) {
      const double aik = av[i * k + t];
      if (aik == 0.0) continue;
      const double* brow = bv + t * n;
      double* orow = ov + i * n;
      for (Index j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  detail::check_finite(out, "matmul");
  mark_output(out, {&a, &b});
  record_if_needed({&a, &b}, [a, b, out, m, k, n]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr) return;
    const double* g = dy->data();
    if (a.requires_grad()) {
      double* da = a.grad().data();
      const double* bv = b.data();
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          if (gij == 0.0) continue;
          for (Index t = 0; t < k; ++t) da[i * k + t] += gij * bv[t * n + j];
        }
    }
    if (b.requires_grad()) {
      double* db = b.grad().data();
      const double* av = a.data();
      for (Index i = 0; i < m; ++i)
        for (Index t = 0; t < k; ++t) {
          const double ait = av[i * k + t];
          if (ait == 0.0) continue;
          for (Index j = 0; j < n; ++j) db[t * n + j] += ait * g[i * n + j];
        }
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: expects a rank-2 input, got " + shape_to_string(a.shape()));
  return swap_last2(a);
}

Tensor swap_last2(const Tensor& a) {
  require(a.rank() >= 2, "swap_last2: expects rank >= 2, got " + shape_to_string(a.shape()));
  Shape out_shape = a.shape();
  const int r = a.rank();
  std::swap(out_shape[static_cast<std::size_t>(r - 2)], out_shape[static_cast<std::size_t>(r - 1)]);
  const Index rows = a.shape()[static_cast<std::size_t>(r - 2)];
  const Index cols = a.shape()[static_cast<std::size_t>(r - 1)];
  const Index batch = a.size() / std::max<Index>(rows * cols, 1);
  Tensor out = Tensor::zeros(out_shape);
  const double* x = a.data();
  double* y = out.data();
  for (Index bi = 0; bi < batch; ++bi) {
    const double* xb = x + bi * rows * cols;
    double* yb = y + bi * rows * cols;
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) yb[j * rows + i] = xb[i * cols + j];
  }
  mark_output(out, {&a});
  record_if_needed({&a}, [a, out, batch, rows, cols]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !a.requires_grad()) return;
    double* dx = a.grad().data();
    const double* g = dy->data();
    for (Index bi = 0; bi < batch; ++bi) {
      const double* gb = g + bi * rows * cols;
      double* db = dx + bi * rows * cols;
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) db[i * cols + j] += gb[j * rows + i];
    }
  });
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: cannot view " + shape_to_string(a.shape()) +
                                             " as " + shape_to_string(shape));
  Tensor out = Tensor::from(std::move(shape), a.values());
  mark_output(out, {&a});
  record_if_needed({&a}, [a, out]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !a.requires_grad()) return;
    std::vector<double>& dx = a.grad();
    for (std::size_t i = 0; i < dy->size(); ++i) dx[i] += (*dy)[i];
  });
  return out;
}

namespace {

// Row-major split of a shape around `axis`: outer (before), axis, inner (after).
void axis_strides(const Shape& shape, int axis, Index& outer, Index& axis_dim, Index& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  axis_dim = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: needs at least one input");
  const int r = parts[0].rank();
  require(axis >= 0 && axis < r, "concat: axis " + std::to_string(axis) + " out of range for " +
                                     shape_to_string(parts[0].shape()));
  Index total_axis = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == r, "concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i == axis) continue;
      require(p.dim(i) == parts[0].dim(i), "concat: shape mismatch " +
                                               shape_to_string(p.shape()) + " vs " +
                                               shape_to_string(parts[0].shape()));
    }
    total_axis += p.dim(axis);
  }
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = total_axis;
  Tensor out = Tensor::zeros(out_shape);
  Index outer, axis_dim, inner;
  axis_strides(out_shape, axis, outer, axis_dim, inner);

  Index offset = 0;
  for (const Tensor& p : parts) {
    const Index pa = p.dim(axis);
    const double* src = p.data();
    for (Index o = 0; o < outer; ++o) {
      double* dst = out.data() + (o * axis_dim + offset) * inner;
      std::memcpy(dst, src + o * pa * inner, static_cast<std::size_t>(pa * inner) * sizeof(double));
    }
    offset += pa;
  }
  std::vector<const Tensor*> in_ptrs;
  for (const Tensor& p : parts) in_ptrs.push_back(&p);
  bool wants = false;
  for (const Tensor* p : in_ptrs) wants = wants || p->requires_grad();
  if (Tape::active() != nullptr && wants) {
    out.set_requires_grad(true);
    std::vector<Tensor> held = parts;
    Tape::active()->record([held, out, outer, axis_dim, inner, axis]() mutable {
      const std::vector<double>* dy = out_grad(out);
      if (dy == nullptr) return;
      Index offset = 0;
      for (Tensor& p : held) {
        const Index pa = p.dim(axis);
        if (p.requires_grad()) {
          double* dst = p.grad().data();
          for (Index o = 0; o < outer; ++o) {
            const double* src = dy->data() + (o * axis_dim + offset) * inner;
            double* drow = dst + o * pa * inner;
            for (Index i = 0; i < pa * inner; ++i) drow[i] += src[i];
          }
        }
        offset += pa;
      }
    });
  }
  return out;
}

Tensor narrow(const Tensor& a, int axis, Index start, Index length) {
  require(axis >= 0 && axis < a.rank(), "narrow: axis " + std::to_string(axis) +
                                            " out of range for " + shape_to_string(a.shape()));
  require(length >= 1 && start >= 0 && start + length <= a.dim(axis),
          "narrow: window [" + std::to_string(start) + ", " + std::to_string(start + length) +
              ") out of range for axis size " + std::to_string(a.dim(axis)));
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  Tensor out = Tensor::zeros(out_shape);
  Index outer, axis_dim, inner;
  axis_strides(a.shape(), axis, outer, axis_dim, inner);
  for (Index o = 0; o < outer; ++o) {
    const double* src = a.data() + (o * axis_dim + start) * inner;
    std::memcpy(out.data() + o * length * inner, src,
                static_cast<std::size_t>(length * inner) * sizeof(double));
  }
  mark_output(out, {&a});
  record_if_needed({&a}, [a, out, outer, axis_dim, inner, start, length]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !a.requires_grad()) return;
    double* dx = a.grad().data();
    for (Index o = 0; o < outer; ++o) {
      double* dst = dx + (o * axis_dim + start) * inner;
      const double* src = dy->data() + o * length * inner;
      for (Index i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

Tensor stack0(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "stack0: needs at least one input");
  for (const Tensor& p : parts) {
    require(p.shape() == parts[0].shape(), "stack0: shape mismatch " +
                                               shape_to_string(p.shape()) + " vs " +
                                               shape_to_string(parts[0].shape()));
  }
  Shape out_shape;
  out_shape.push_back(static_cast<Index>(parts.size()));
  for (Index d : parts[0].shape()) out_shape.push_back(d);
  Tensor out = Tensor::zeros(out_shape);
  const Index chunk = parts[0].size();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::memcpy(out.data() + static_cast<Index>(i) * chunk, parts[i].data(),
                static_cast<std::size_t>(chunk) * sizeof(double));
  }
  bool wants = false;
  for (const Tensor& p : parts) wants = wants || p.requires_grad();
  if (Tape::active() != nullptr && wants) {
    out.set_requires_grad(true);
    std::vector<Tensor> held = parts;
    Tape::active()->record([held, out, chunk]() mutable {
      const std::vector<double>* dy = out_grad(out);
      if (dy == nullptr) return;
      for (std::size_t i = 0; i < held.size(); ++i) {
        if (!held[i].requires_grad()) continue;
        double* dst = held[i].grad().data();
        const double* src = dy->data() + static_cast<Index>(i) * chunk;
        for (Index j = 0; j < chunk; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor select0(const Tensor& a, Index index) {
  require(a.rank() >= 1, "select0: expects rank >= 1");
  require(index >= 0 && index < a.dim(0), "select0: index " + std::to_string(index) +
                                              " out of range for leading dimension " +
                                              std::to_string(a.dim(0)));
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  Tensor out = Tensor::zeros(out_shape);
  const Index chunk = out.size();
  std::memcpy(out.data(), a.data() + index * chunk, static_cast<std::size_t>(chunk) * sizeof(double));
  mark_output(out, {&a});
  record_if_needed({&a}, [a, out, index, chunk]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !a.requires_grad()) return;
    double* dst = a.grad().data() + index * chunk;
    for (Index j = 0; j < chunk; ++j) dst[j] += (*dy)[static_cast<std::size_t>(j)];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& a) {
  return unary_pointwise(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_pointwise(a, "sigmoid",
                         [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                        : std::exp(x) / (1.0 + std::exp(x)); },
                         [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_act(const Tensor& a) {
  return unary_pointwise(a, "tanh", [](double x) { return std::tanh(x); },
                         [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a, GeluForm form) {
  if (form == GeluForm::Exact) {
    return unary_pointwise(
        a, "gelu",
        [](double x) { return 0.5 * x * std::erfc(-x * kInvSqrt2); },
        [](double x, double) {
          const double cdf = 0.5 * std::erfc(-x * kInvSqrt2);
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          return cdf + x * pdf;
        });
  }
  return unary_pointwise(
      a, "gelu",
      [](double x) {
        const double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x, double) {
        const double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = kSqrt2OverPi * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Index conv1d_out_len(Index length, Index kernel, Index stride, Index dilation, Index padding) {
  const Index reach = length + 2 * padding - dilation * (kernel - 1) - 1;
  if (reach < 0) return 0;
  return reach / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, Index stride, Index dilation,
              Index padding) {
  require(x.rank() == 2 || x.rank() == 3,
          "conv1d: input must be [C,L] or [B,C,L], got " + shape_to_string(x.shape()));
  require(w.rank() == 3, "conv1d: weight must be [Cout,Cin,k], got " + shape_to_string(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0),
          "conv1d: bias must be [Cout], got " + shape_to_string(b.shape()));
  require(stride >= 1 && dilation >= 1 && padding >= 0,
          "conv1d: stride/dilation must be >= 1 and padding >= 0");
  const bool batched = x.rank() == 3;
  const Index B = batched ? x.dim(0) : 1;
  const Index Cin = batched ? x.dim(1) : x.dim(0);
  const Index L = batched ? x.dim(2) : x.dim(1);
  const Index Cout = w.dim(0);
  const Index k = w.dim(2);
  require(w.dim(1) == Cin, "conv1d: weight expects " + std::to_string(w.dim(1)) +
                               " input channels but input has " + std::to_string(Cin));
  const Index Lout = conv1d_out_len(L, k, stride, dilation, padding);
  require(Lout >= 1, "conv1d: output length " + std::to_string(Lout) +
                         " is not positive for input length " + std::to_string(L) + " (kernel " +
                         std::to_string(k) + ", stride " + std::to_string(stride) + ", dilation " +
                         std::to_string(dilation) + ", padding " + std::to_string(padding) + ")");

  Shape out_shape = batched ? Shape{B, Cout, Lout} : Shape{Cout, Lout};
  Tensor out = Tensor::zeros(out_shape);
  const double* xv = x.data();
  const double* wv = w.data();
  const double* bv = b.data();
  double* ov = out.data();

  for (Index bi = 0; bi < B; ++bi) {
    const double* xb = xv + bi * Cin * L;
    double* ob = ov + bi * Cout * Lout;
    for (Index oc = 0; oc < Cout; ++oc) {
      double* orow = ob + oc * Lout;
      for (Index t = 0; t < Lout; ++t) orow[t] = bv[oc];
      for (Index ic = 0; ic < Cin; ++ic) {
        const double* xrow = xb + ic * L;
        const double* wrow = wv + (oc * Cin + ic) * k;
        for (Index j = 0; j < k; ++j) {
          const double wj = wrow[j];
          if (wj == 0.0) continue;
          const Index base = j * dilation - padding;
          // valid t range: 0 <= t*stride + base < L
          Index t0 = base < 0 ? (-base + stride - 1) / stride : 0;
          Index t1 = base >= L ? 0 : (L - 1 - base) / stride + 1;
          if (t1 > Lout) t1 = Lout;
          for (Index t = t0; t < t1; ++t) orow[t] += wj * xrow[t * stride + base];
        }
      }
    }
  }
  detail::check_finite(out, "conv1d");
  mark_output(out, {&x, &w, &b});
  record_if_needed({&x, &w, &b}, [x, w, b, out, B, Cin, L, Cout, k, Lout, stride, dilation,
                                  padding]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr) return;
    const double* dy = dyv->data();
    const bool dx_wanted = x.requires_grad();
    const bool dw_wanted = w.requires_grad();
    const bool db_wanted = b.requires_grad();
    double* dx = dx_wanted ? x.grad().data() : nullptr;
    double* dw = dw_wanted ? w.grad().data() : nullptr;
    double* db = db_wanted ? b.grad().data() : nullptr;
    const double* xv = x.data();
    const double* wv = w.data();
    for (Index bi = 0; bi < B; ++bi) {
      const double* xb = xv + bi * Cin * L;
      const double* gb = dy + bi * Cout * Lout;
      double* dxb = dx_wanted ? dx + bi * Cin * L : nullptr;
      for (Index oc = 0; oc < Cout; ++oc) {
        const double* grow = gb + oc * Lout;
        if (db_wanted) {
          double s = 0.0;
          for (Index t = 0; t < Lout; ++t) s += grow[t];
          db[oc] += s;
        }
        for (Index ic = 0; ic < Cin; ++ic) {
          const double* xrow = xb + ic * L;
          const double* wrow = wv + (oc * Cin + ic) * k;
          double* dxrow = dx_wanted ? dxb + ic * L : nullptr;
          double* dwrow = dw_wanted ? dw + (oc * Cin + ic) * k : nullptr;
          for (Index j = 0; j < k; ++j) {
            const Index base = j * dilation - padding;
            Index t0 = base < 0 ? (-base + stride - 1) / stride : 0;
            Index t1 = base >= L ? 0 : (L - 1 - base) / stride + 1;
            if (t1 > Lout) t1 = Lout;
            if (dw_wanted) {
              double s = 0.0;
              for (Index t = t0; t < t1; ++t) s += grow[t] * xrow[t * stride + base];
              dwrow[j] += s;
            }
            if (dx_wanted) {
              const double wj = wrow[j];
              if (wj != 0.0)
                for (Index t = t0; t < t1; ++t) dxrow[t * stride + base] += grow[t] * wj;
            }
          }
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, Mode mode, double eps, double momentum) {
  require(x.rank() == 3, "batchnorm1d: input must be [B,C,L], got " + shape_to_string(x.shape()));
  const Index B = x.dim(0), C = x.dim(1), L = x.dim(2);
  require(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 && beta.dim(0) == C,
          "batchnorm1d: gamma/beta must be [C] with C=" + std::to_string(C));
  require(running_mean.rank() == 1 && running_mean.dim(0) == C && running_var.rank() == 1 &&
              running_var.dim(0) == C,
          "batchnorm1d: running stats must be [C] with C=" + std::to_string(C));
  const Index N = B * L;
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const double* gv = gamma.data();
  const double* bv = beta.data();

  std::vector<double> mean_c(static_cast<std::size_t>(C), 0.0);
  std::vector<double> inv_std_c(static_cast<std::size_t>(C), 0.0);

  if (mode == Mode::Train) {
    require(N > 1, "batchnorm1d: training statistics need more than one value per channel");
    for (Index c = 0; c < C; ++c) {
      double s = 0.0;
      for (Index bi = 0; bi < B; ++bi) {
        const double* row = xv + (bi * C + c) * L;
        for (Index t = 0; t < L; ++t) s += row[t];
      }
      const double mu = s / static_cast<double>(N);
      double sq = 0.0;
      for (Index bi = 0; bi < B; ++bi) {
        const double* row = xv + (bi * C + c) * L;
        for (Index t = 0; t < L; ++t) {
          const double d = row[t] - mu;
          sq += d * d;
        }
      }
      const double var_biased = sq / static_cast<double>(N);
      const double var_unbiased = sq / static_cast<double>(N - 1);
      mean_c[static_cast<std::size_t>(c)] = mu;
      inv_std_c[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var_biased + eps);
      running_mean.at(c) = (1.0 - momentum) * running_mean.at(c) + momentum * mu;
      running_var.at(c) = (1.0 - momentum) * running_var.at(c) + momentum * var_unbiased;
    }
  } else {
    for (Index c = 0; c < C; ++c) {
      mean_c[static_cast<std::size_t>(c)] = running_mean.at(c);
      inv_std_c[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(running_var.at(c) + eps);
    }
  }

  for (Index bi = 0; bi < B; ++bi)
    for (Index c = 0; c < C; ++c) {
      const double mu = mean_c[static_cast<std::size_t>(c)];
      const double is = inv_std_c[static_cast<std::size_t>(c)];
      const double g = gv[c], be = bv[c];
      const double* row = xv + (bi * C + c) * L;
      double* orow = ov + (bi * C + c) * L;
      for (Index t = 0; t < L; ++t) orow[t] = g * (row[t] - mu) * is + be;
    }
  detail::check_finite(out, "batchnorm1d");
  mark_output(out, {&x, &gamma, &beta});

  const bool train = mode == Mode::Train;
  record_if_needed({&x, &gamma, &beta}, [x, gamma, beta, out, mean_c, inv_std_c, B, C, L, N,
                                         train]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr) return;
    const double* dy = dyv->data();
    const double* xv = x.data();
    const double* gv = gamma.data();
    double* dg = gamma.requires_grad() ? gamma.grad().data() : nullptr;
    double* dbeta = beta.requires_grad() ? beta.grad().data() : nullptr;
    double* dx = x.requires_grad() ? x.grad().data() : nullptr;
    for (Index c = 0; c < C; ++c) {
      const double mu = mean_c[static_cast<std::size_t>(c)];
      const double is = inv_std_c[static_cast<std::size_t>(c)];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (Index bi = 0; bi < B; ++bi) {
        const double* grow = dy + (bi * C + c) * L;
        const double* xrow = xv + (bi * C + c) * L;
        for (Index t = 0; t < L; ++t) {
          sum_dy += grow[t];
          sum_dy_xhat += grow[t] * (xrow[t] - mu) * is;
        }
      }
      if (dg != nullptr) dg[c] += sum_dy_xhat;
      if (dbeta != nullptr) dbeta[c] += sum_dy;
      if (dx != nullptr) {
        const double g_is = gv[c] * is;
        if (train) {
          const double mean_dy = sum_dy / static_cast<double>(N);
          const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(N);
          for (Index bi = 0; bi < B; ++bi) {
            const double* grow = dy + (bi * C + c) * L;
            const double* xrow = xv + (bi * C + c) * L;
            double* dxrow = dx + (bi * C + c) * L;
            for (Index t = 0; t < L; ++t) {
              const double xhat = (xrow[t] - mu) * is;
              dxrow[t] += g_is * (grow[t] - mean_dy - xhat * mean_dy_xhat);
            }
          }
        } else {
          for (Index bi = 0; bi < B; ++bi) {
            const double* grow = dy + (bi * C + c) * L;
            double* dxrow = dx + (bi * C + c) * L;
            for (Index t = 0; t < L; ++t) dxrow[t] += g_is * grow[t];
          }
        }
      }
    }
  });
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require(x.rank() >= 1, "layernorm: expects rank >= 1");
  const Index D = x.dim(x.rank() - 1);
  require(gamma.rank() == 1 && gamma.dim(0) == D && beta.rank() == 1 && beta.dim(0) == D,
          "layernorm: gamma/beta must be [D] with D=" + std::to_string(D));
  require(D > 0, "layernorm: trailing dimension must be positive");
  const Index rows = x.size() / D;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> mean_r(static_cast<std::size_t>(rows));
  std::vector<double> inv_std_r(static_cast<std::size_t>(rows));
  const double* xv = x.data();
  double* ov = out.data();
  const double* gv = gamma.data();
  const double* bv = beta.data();
  for (Index r = 0; r < rows; ++r) {
    const double* xr = xv + r * D;
    double s = 0.0;
    for (Index i = 0; i < D; ++i) s += xr[i];
    const double mu = s / static_cast<double>(D);
    double sq = 0.0;
    for (Index i = 0; i < D; ++i) {
      const double d = xr[i] - mu;
      sq += d * d;
    }
    const double is = 1.0 / std::sqrt(sq / static_cast<double>(D) + eps);
    mean_r[static_cast<std::size_t>(r)] = mu;
    inv_std_r[static_cast<std::size_t>(r)] = is;
    double* orow = ov + r * D;
    for (Index i = 0; i < D; ++i) orow[i] = gv[i] * (xr[i] - mu) * is + bv[i];
  }
  detail::check_finite(out, "layernorm");
  mark_output(out, {&x, &gamma, &beta});
  record_if_needed({&x, &gamma, &beta}, [x, gamma, beta, out, mean_r, inv_std_r, rows, D]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr) return;
    const double* dy = dyv->data();
    const double* xv = x.data();
    const double* gv = gamma.data();
    double* dg = gamma.requires_grad() ? gamma.grad().data() : nullptr;
    double* dbeta = beta.requires_grad() ? beta.grad().data() : nullptr;
    double* dx = x.requires_grad() ? x.grad().data() : nullptr;
    for (Index r = 0; r < rows; ++r) {
      const double mu = mean_r[static_cast<std::size_t>(r)];
      const double is = inv_std_r[static_cast<std::size_t>(r)];
      const double* xr = xv + r * D;
      const double* gr = dy + r * D;
      double sum_g = 0.0, sum_g_xhat = 0.0;
      for (Index i = 0; i < D; ++i) {
        const double xhat = (xr[i] - mu) * is;
        const double gi = gr[i] * gv[i];
        sum_g += gi;
        sum_g_xhat += gi * xhat;
        if (dg != nullptr) dg[i] += gr[i] * xhat;
        if (dbeta != nullptr) dbeta[i] += gr[i];
      }
      if (dx != nullptr) {
        const double mean_g = sum_g / static_cast<double>(D);
        const double mean_g_xhat = sum_g_xhat / static_cast<double>(D);
        double* dxr = dx + r * D;
        for (Index i = 0; i < D; ++i) {
          const double xhat = (xr[i] - mu) * is;
          dxr[i] += is * (gr[i] * gv[i] - mean_g - xhat * mean_g_xhat);
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

Tensor maxpool1d(const Tensor& x, Index window, Index stride) {
  require(x.rank() == 2 || x.rank() == 3,
          "maxpool1d: input must be [C,L] or [B,C,L], got " + shape_to_string(x.shape()));
  require(window >= 1 && stride >= 1, "maxpool1d: window and stride must be >= 1");
  const bool batched = x.rank() == 3;
  const Index B = batched ? x.dim(0) : 1;
  const Index C = batched ? x.dim(1) : x.dim(0);
  const Index L = batched ? x.dim(2) : x.dim(1);
  require(L >= window, "maxpool1d: input length " + std::to_string(L) +
                           " shorter than window " + std::to_string(window));
  const Index Lout = (L - window) / stride + 1;
  Shape out_shape = batched ? Shape{B, C, Lout} : Shape{C, Lout};
  Tensor out = Tensor::zeros(out_shape);
  std::vector<Index> argmax(static_cast<std::size_t>(B * C * Lout));
  const double* xv = x.data();
  double* ov = out.data();
  for (Index bc = 0; bc < B * C; ++bc) {
    const double* row = xv + bc * L;
    double* orow = ov + bc * Lout;
    Index* arow = argmax.data() + bc * Lout;
    for (Index t = 0; t < Lout; ++t) {
      Index best = t * stride;
      double bv = row[best];
      for (Index j = 1; j < window; ++j) {
        const Index p = t * stride + j;
        if (row[p] > bv) {
          bv = row[p];
          best = p;
        }
      }
      orow[t] = bv;
      arow[t] = best;
    }
  }
  detail::check_finite(out, "maxpool1d");
  mark_output(out, {&x});
  record_if_needed({&x}, [x, out, argmax, B, C, L, Lout]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !x.requires_grad()) return;
    double* dx = x.grad().data();
    const double* g = dy->data();
    for (Index bc = 0; bc < B * C; ++bc) {
      const Index* arow = argmax.data() + bc * Lout;
      const double* grow = g + bc * Lout;
      double* dxrow = dx + bc * L;
      for (Index t = 0; t < Lout; ++t) dxrow[arow[t]] += grow[t];
    }
  });
  return out;
}

Tensor avgpool(const Tensor& x, int axis) {
  require(axis >= 0 && axis < x.rank(), "avgpool: axis " + std::to_string(axis) +
                                            " out of range for " + shape_to_string(x.shape()));
  Index outer, axis_dim, inner;
  axis_strides(x.shape(), axis, outer, axis_dim, inner);
  require(axis_dim > 0, "avgpool: cannot average over an empty axis");
  Shape out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  Tensor out = Tensor::zeros(out_shape);
  const double* xv = x.data();
  double* ov = out.data();
  const double inv = 1.0 / static_cast<double>(axis_dim);
  for (Index o = 0; o < outer; ++o)
    for (Index a = 0; a < axis_dim; ++a) {
      const double* src = xv + (o * axis_dim + a) * inner;
      double* dst = ov + o * inner;
      for (Index i = 0; i < inner; ++i) dst[i] += src[i] * inv;
    }
  detail::check_finite(out, "avgpool");
  mark_output(out, {&x});
  record_if_needed({&x}, [x, out, outer, axis_dim, inner, inv]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !x.requires_grad()) return;
    double* dx = x.grad().data();
    const double* g = dy->data();
    for (Index o = 0; o < outer; ++o)
      for (Index a = 0; a < axis_dim; ++a) {
        double* dst = dx + (o * axis_dim + a) * inner;
        const double* src = g + o * inner;
        for (Index i = 0; i < inner; ++i) dst[i] += src[i] * inv;
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Linear, softmax, dropout
// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  require(x.rank() == 2 || x.rank() == 3,
          "linear: input must be [N,Din] or [B,S,Din], got " + shape_to_string(x.shape()));
  require(w.rank() == 2, "linear: weight must be [Dout,Din], got " + shape_to_string(w.shape()));
  const Index Din = x.dim(x.rank() - 1);
  const Index Dout = w.dim(0);
  require(w.dim(1) == Din, "linear: weight expects " + std::to_string(w.dim(1)) +
                               " input features but input has " + std::to_string(Din));
  if (bias != nullptr)
    require(bias->rank() == 1 && bias->dim(0) == Dout,
            "linear: bias must be [Dout], got " + shape_to_string(bias->shape()));
  const Index rows = x.size() / Din;
  Shape out_shape = x.shape();
  out_shape.back() = Dout;
  Tensor out = Tensor::zeros(out_shape);
  const double* xv = x.data();
  const double* wv = w.data();
  double* ov = out.data();
  for (Index r = 0; r < rows; ++r) {
    const double* xr = xv + r * Din;
    double* orow = ov + r * Dout;
    if (bias != nullptr) {
      const double* bv = bias->data();
      for (Index o = 0; o < Dout; ++o) orow[o] = bv[o];
    }
    for (Index i = 0; i < Din; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      for (Index o = 0; o < Dout; ++o) orow[o] += xi * wv[o * Din + i];
    }
  }
  detail::check_finite(out, "linear");
  const Tensor held_bias = bias != nullptr ? *bias : Tensor();
  std::initializer_list<const Tensor*> ins = {&x, &w, bias};
  mark_output(out, ins);
  record_if_needed(ins, [x, w, held_bias, out, rows, Din, Dout]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr) return;
    const double* dy = dyv->data();
    const double* xv = x.data();
    const double* wv = w.data();
    double* dx = x.requires_grad() ? x.grad().data() : nullptr;
    double* dw = w.requires_grad() ? w.grad().data() : nullptr;
    double* db =
        held_bias.defined() && held_bias.requires_grad() ? held_bias.grad().data() : nullptr;
    for (Index r = 0; r < rows; ++r) {
      const double* grow = dy + r * Dout;
      const double* xr = xv + r * Din;
      double* dxr = dx != nullptr ? dx + r * Din : nullptr;
      for (Index o = 0; o < Dout; ++o) {
        const double g = grow[o];
        if (g == 0.0) continue;
        if (db != nullptr) db[o] += g;
        const double* wrow = wv + o * Din;
        if (dxr != nullptr)
          for (Index i = 0; i < Din; ++i) dxr[i] += g * wrow[i];
        if (dw != nullptr) {
          double* dwrow = dw + o * Din;
          for (Index i = 0; i < Din; ++i) dwrow[i] += g * xr[i];
        }
      }
    }
  });
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0) axis += x.rank();
  require(axis >= 0 && axis < x.rank(), "softmax: axis out of range for " +
                                            shape_to_string(x.shape()));
  Index outer, axis_dim, inner;
  axis_strides(x.shape(), axis, outer, axis_dim, inner);
  require(axis_dim > 0, "softmax: cannot normalize an empty axis");
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * axis_dim * inner + i;
      double mx = xv[base];
      for (Index a = 1; a < axis_dim; ++a) mx = std::max(mx, xv[base + a * inner]);
      double denom = 0.0;
      for (Index a = 0; a < axis_dim; ++a) {
        const double e = std::exp(xv[base + a * inner] - mx);
        ov[base + a * inner] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (Index a = 0; a < axis_dim; ++a) ov[base + a * inner] *= inv;
    }
  detail::check_finite(out, "softmax");
  mark_output(out, {&x});
  record_if_needed({&x}, [x, out, outer, axis_dim, inner]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr || !x.requires_grad()) return;
    const double* dy = dyv->data();
    const double* y = out.data();
    double* dx = x.grad().data();
    for (Index o = 0; o < outer; ++o)
      for (Index i = 0; i < inner; ++i) {
        const Index base = o * axis_dim * inner + i;
        double dot = 0.0;
        for (Index a = 0; a < axis_dim; ++a) dot += dy[base + a * inner] * y[base + a * inner];
        for (Index a = 0; a < axis_dim; ++a) {
          const Index p = base + a * inner;
          dx[p] += y[p] * (dy[p] - dot);
        }
      }
  });
  return out;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0,
          "dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0) {
    // Identity, but still a tape node so gradients flow through the same path.
    return unary_pointwise(x, "dropout", [](double v) { return v; },
                           [](double, double) { return 1.0; });
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<std::size_t>(x.size()));
  for (double& m : mask) m = rng.uniform01() < rate ? 0.0 : keep_scale;
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const Index n = x.size();
  for (Index i = 0; i < n; ++i) ov[i] = xv[i] * mask[static_cast<std::size_t>(i)];
  detail::check_finite(out, "dropout");
  mark_output(out, {&x});
  record_if_needed({&x}, [x, out, mask]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !x.requires_grad()) return;
    std::vector<double>& dx = x.grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += (*dy)[i] * mask[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Attention primitives
// ---------------------------------------------------------------------------

Tensor mask_diagonal(const Tensor& logits, MaskMode mode) {
  require(logits.rank() == 2 || logits.rank() == 3,
          "mask_diagonal: input must be [S,S] or [H,S,S], got " + shape_to_string(logits.shape()));
  const int r = logits.rank();
  const Index S = logits.dim(r - 1);
  require(logits.dim(r - 2) == S, "mask_diagonal: trailing axes must be square, got " +
                                      shape_to_string(logits.shape()));
  if (mode == MaskMode::NegInfDiag && S == 1) {
    throw std::invalid_argument(
        "mask_diagonal: sequence length 1 leaves no unmasked key under the large-negative mask");
  }
  const Index H = r == 3 ? logits.dim(0) : 1;
  Tensor out = Tensor::zeros(logits.shape());
  const double* xv = logits.data();
  double* ov = out.data();
  std::memcpy(ov, xv, static_cast<std::size_t>(logits.size()) * sizeof(double));
  const double diag_value = mode == MaskMode::SubtractDiag ? 0.0 : kMaskSentinel;
  for (Index h = 0; h < H; ++h)
    for (Index i = 0; i < S; ++i) ov[(h * S + i) * S + i] = diag_value;
  detail::check_finite(out, "mask_diagonal");
  mark_output(out, {&logits});
  record_if_needed({&logits}, [logits, out, H, S]() mutable {
    const std::vector<double>* dy = out_grad(out);
    if (dy == nullptr || !logits.requires_grad()) return;
    std::vector<double>& dx = logits.grad();
    for (std::size_t p = 0; p < dx.size(); ++p) dx[p] += (*dy)[p];
    for (Index h = 0; h < H; ++h)
      for (Index i = 0; i < S; ++i) dx[static_cast<std::size_t>((h * S + i) * S + i)] -= (*dy)[static_cast<std::size_t>((h * S + i) * S + i)];
  });
  return out;
}

Tensor rope(const Tensor& x, const std::vector<Index>& positions, double base) {
  require(x.rank() == 3, "rope: input must be [S,H,d], got " + shape_to_string(x.shape()));
  const Index S = x.dim(0), H = x.dim(1), d = x.dim(2);
  require(d % 2 == 0, "rope: head dimension must be even, got " + std::to_string(d));
  require(static_cast<Index>(positions.size()) == S,
          "rope: got " + std::to_string(positions.size()) + " positions for sequence length " +
              std::to_string(S));
  require(base > 0.0, "rope: base must be positive");
  const Index half = d / 2;
  std::vector<double> theta(static_cast<std::size_t>(half));
  for (Index j = 0; j < half; ++j)
    theta[static_cast<std::size_t>(j)] =
        std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d));
  // cos/sin per (position, pair), shared by forward and backward
  std::vector<double> cs(static_cast<std::size_t>(S * half)), sn(static_cast<std::size_t>(S * half));
  for (Index s = 0; s < S; ++s)
    for (Index j = 0; j < half; ++j) {
      const double ang = static_cast<double>(positions[static_cast<std::size_t>(s)]) *
                         theta[static_cast<std::size_t>(j)];
      cs[static_cast<std::size_t>(s * half + j)] = std::cos(ang);
      sn[static_cast<std::size_t>(s * half + j)] = std::sin(ang);
    }
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  for (Index s = 0; s < S; ++s)
    for (Index h = 0; h < H; ++h) {
      const double* xr = xv + (s * H + h) * d;
      double* orow = ov + (s * H + h) * d;
      for (Index j = 0; j < half; ++j) {
        const double c = cs[static_cast<std::size_t>(s * half + j)];
        const double si = sn[static_cast<std::size_t>(s * half + j)];
        const double x0 = xr[2 * j], x1 = xr[2 * j + 1];
        orow[2 * j] = x0 * c - x1 * si;
        orow[2 * j + 1] = x0 * si + x1 * c;
      }
    }
  detail::check_finite(out, "rope");
  mark_output(out, {&x});
  record_if_needed({&x}, [x, out, cs, sn, S, H, d, half]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr || !x.requires_grad()) return;
    const double* dy = dyv->data();
    double* dx = x.grad().data();
    for (Index s = 0; s < S; ++s)
      for (Index h = 0; h < H; ++h) {
        const double* grow = dy + (s * H + h) * d;
        double* dxr = dx + (s * H + h) * d;
        for (Index j = 0; j < half; ++j) {
          const double c = cs[static_cast<std::size_t>(s * half + j)];
          const double si = sn[static_cast<std::size_t>(s * half + j)];
          const double g0 = grow[2 * j], g1 = grow[2 * j + 1];
          dxr[2 * j] += g0 * c + g1 * si;
          dxr[2 * j + 1] += -g0 * si + g1 * c;
        }
      }
  });
  return out;
}

Tensor attention_logits(const Tensor& q, const Tensor& k) {
  require(q.rank() == 3 && k.rank() == 3 && q.shape() == k.shape(),
          "attention_logits: q and k must both be [S,H,d], got " + shape_to_string(q.shape()) +
              " and " + shape_to_string(k.shape()));
  const Index S = q.dim(0), H = q.dim(1), d = q.dim(2);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out = Tensor::zeros({H, S, S});
  const double* qv = q.data();
  const double* kv = k.data();
  double* ov = out.data();
  for (Index h = 0; h < H; ++h)
    for (Index i = 0; i < S; ++i) {
      const double* qr = qv + (i * H + h) * d;
      double* orow = ov + (h * S + i) * S;
      for (Index j = 0; j < S; ++j) {
        const double* kr = kv + (j * H + h) * d;
        double s = 0.0;
        for (Index t = 0; t < d; ++t) s += qr[t] * kr[t];
        orow[j] = s * inv_sqrt_d;
      }
    }
  detail::check_finite(out, "attention_logits");
  mark_output(out, {&q, &k});
  record_if_needed({&q, &k}, [q, k, out, S, H, d, inv_sqrt_d]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr) return;
    const double* dy = dyv->data();
    const double* qv = q.data();
    const double* kv = k.data();
    double* dq = q.requires_grad() ? q.grad().data() : nullptr;
    double* dk = k.requires_grad() ? k.grad().data() : nullptr;
    for (Index h = 0; h < H; ++h)
      for (Index i = 0; i < S; ++i) {
        const double* grow = dy + (h * S + i) * S;
        const double* qr = qv + (i * H + h) * d;
        double* dqr = dq != nullptr ? dq + (i * H + h) * d : nullptr;
        for (Index j = 0; j < S; ++j) {
          const double g = grow[j] * inv_sqrt_d;
          if (g == 0.0) continue;
          const double* kr = kv + (j * H + h) * d;
          if (dqr != nullptr)
            for (Index t = 0; t < d; ++t) dqr[t] += g * kr[t];
          if (dk != nullptr) {
            double* dkr = dk + (j * H + h) * d;
            for (Index t = 0; t < d; ++t) dkr[t] += g * qr[t];
          }
        }
      }
  });
  return out;
}

Tensor attention_apply(const Tensor& a, const Tensor& v) {
  require(a.rank() == 3 && v.rank() == 3, "attention_apply: expects [H,S,S] and [S,H,d]");
  const Index H = a.dim(0), S = a.dim(1), d = v.dim(2);
  require(a.dim(2) == S && v.dim(0) == S && v.dim(1) == H,
          "attention_apply: shape mismatch " + shape_to_string(a.shape()) + " with " +
              shape_to_string(v.shape()));
  Tensor out = Tensor::zeros({S, H, d});
  const double* av = a.data();
  const double* vv = v.data();
  double* ov = out.data();
  for (Index h = 0; h < H; ++h)
    for (Index i = 0; i < S; ++i) {
      const double* arow = av + (h * S + i) * S;
      double* orow = ov + (i * H + h) * d;
      for (Index j = 0; j < S; ++j) {
        const double w = arow[j];
        if (w == 0.0) continue;
        const double* vr = vv + (j * H + h) * d;
        for (Index t = 0; t < d; ++t) orow[t] += w * vr[t];
      }
    }
  detail::check_finite(out, "attention_apply");
  mark_output(out, {&a, &v});
  record_if_needed({&a, &v}, [a, v, out, H, S, d]() mutable {
    const std::vector<double>* dyv = out_grad(out);
    if (dyv == nullptr) return;
    const double* dy = dyv->data();
    const double* av = a.data();
    const double* vv = v.data();
    double* da = a.requires_grad() ? a.grad().data() : nullptr;
    double* dv = v.requires_grad() ? v.grad().data() : nullptr;
    for (Index h = 0; h < H; ++h)
      for (Index i = 0; i < S; ++i) {
        const double* grow = dy + (i * H + h) * d;
        const double* arow = av + (h * S + i) * S;
        double* darow = da != nullptr ? da + (h * S + i) * S : nullptr;
        for (Index j = 0; j < S; ++j) {
          const double* vr = vv + (j * H + h) * d;
          if (darow != nullptr) {
            double s = 0.0;
            for (Index t = 0; t < d; ++t) s += grow[t] * vr[t];
            darow[j] += s;
          }
          if (dv != nullptr) {
            const double w = arow[j];
            if (w != 0.0) {
              double* dvr = dv + (j * H + h) * d;
              for (Index t = 0; t < d; ++t) dvr[t] += w * grow[t];
            }
          }
        }
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Dump format
// ---------------------------------------------------------------------------

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_tensor: cannot open " + path);
  put_u64(os, static_cast<std::uint64_t>(t.rank()));
  for (Index d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
  for (Index i = 0; i < t.size(); ++i) put_f64(os, t.data()[i]);
  if (!os) throw std::runtime_error("write_tensor: write failed for " + path);
}

Tensor read_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_tensor: cannot open " + path);
  const std::uint64_t rank = get_u64(is);
  if (!is || rank > 8) throw std::runtime_error("read_tensor: bad header in " + path);
  Shape shape(rank);
  Index n = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<Index>(get_u64(is));
    n *= shape[i];
  }
  std::vector<double> values(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = get_f64(is);
  if (!is) throw std::runtime_error("read_tensor: truncated payload in " + path);
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace csf
