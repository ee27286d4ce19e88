#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mfhi/error.hpp"

namespace mfhi {

namespace detail {

template <typename T>
struct TensorStorage {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor with shared storage. Copies alias the same buffer;
// use clone() for a deep copy. Training runs with T = float, gradient-oracle
// runs with T = double.
template <typename T>
class Tensor {
 public:
  Tensor() : s_(std::make_shared<detail::TensorStorage<T>>()) {}

  explicit Tensor(std::vector<int> shape)
      : s_(std::make_shared<detail::TensorStorage<T>>()) {
    s_->shape = std::move(shape);
    s_->value.assign(check_shape(s_->shape), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : s_(std::make_shared<detail::TensorStorage<T>>()) {
    const size_t n = check_shape(shape);
    if (n != data.size())
      throw DimensionError("Tensor: data length " + std::to_string(data.size()) +
                           " does not match shape product " + std::to_string(n));
    s_->shape = std::move(shape);
    s_->value = std::move(data);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T fill) {
    Tensor t(std::move(shape));
    for (auto& v : t.s_->value) v = fill;
    return t;
  }

  const std::vector<int>& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  int size() const { return static_cast<int>(s_->value.size()); }

  std::vector<T>& value() { return s_->value; }
  const std::vector<T>& value() const { return s_->value; }
  T* data() { return s_->value.data(); }
  const T* data() const { return s_->value.data(); }

  T& operator[](int i) { return s_->value[static_cast<size_t>(i)]; }
  const T& operator[](int i) const { return s_->value[static_cast<size_t>(i)]; }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    s_->requires_grad = flag;
    return *this;
  }

  // Gradient buffer, zero-initialized on first access.
  std::vector<T>& grad() {
    if (s_->grad.size() != s_->value.size()) s_->grad.assign(s_->value.size(), T(0));
    return s_->grad;
  }
  const std::vector<T>& grad() const { return const_cast<Tensor*>(this)->grad(); }

  void zero_grad() { s_->grad.assign(s_->value.size(), T(0)); }

  Tensor clone() const {
    Tensor t;
    t.s_->shape = s_->shape;
    t.s_->value = s_->value;
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(s_->value.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(s_->value[i]);
    return Tensor<U>(s_->shape, std::move(out));
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  static size_t check_shape(const std::vector<int>& shape) {
    size_t n = 1;
    for (int e : shape) {
      if (e <= 0) throw DimensionError("Tensor: extents must be positive");
      n *= static_cast<size_t>(e);
    }
    return n;
  }

  std::shared_ptr<detail::TensorStorage<T>> s_;
};

// Reverse-mode tape. Operations append their backward closure in execution
// order; backward() replays them once, in reverse. One tape per training
// step, one backward per tape.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  size_t size() const { return ops_.size(); }

  // Seeds the scalar root with gradient 1 and replays the tape.
  void backward(Tensor<T> root);

  void clear() {
    ops_.clear();
    consumed_ = false;
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

enum class EwOp { add, mul, max };

// --- differentiable operations -------------------------------------------
// Every op validates shapes, checks its output for non-finite values, and,
// when a tape is supplied and an input requires grad, records its backward.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape);

// Pointwise add/mul/max. b may equal a's shape, be a single element, be a
// {1,H,W} map against a {C,H,W} block, or be a {N} / {1,N} row against a
// {M,N} matrix. Ties in max route the subgradient to a.
template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, EwOp op, Tape<T>* tape);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x, Tape<T>* tape);

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape);

template <typename T>
Tensor<T> log(const Tensor<T>& x, Tape<T>* tape);

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& x, Tape<T>* tape);

// scale * x + shift, pointwise with constants.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift, Tape<T>* tape);

// Gradient passes only strictly inside [lo, hi].
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi, Tape<T>* tape);

// Global average pooling {C,H,W} -> {C}.
template <typename T>
Tensor<T> gap(const Tensor<T>& f, Tape<T>* tape);

// v / ||v||_2 for rank-1 input; norms below 1e-12 are degenerate.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v, Tape<T>* tape);

// Row-wise l2 normalization of a {N,C} matrix.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& m, Tape<T>* tape);

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, Tape<T>* tape);

// Maximum over all elements; subgradient goes to the first argmax.
template <typename T>
Tensor<T> reduce_max(const Tensor<T>& x, Tape<T>* tape);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape, Tape<T>* tape);

// Gather rows of a {R,C} matrix; backward scatter-adds into the source rows.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& m, const std::vector<int>& rows, Tape<T>* tape);

namespace detail {

// Throws NumericError if any element of t is NaN or Inf.
template <typename T>
void check_finite(const Tensor<T>& t, const char* op);

// Accumulate helper shared by op backwards.
template <typename T>
inline void accumulate(Tensor<T>& t, const std::vector<T>& delta) {
  auto& g = t.grad();
  for (size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

// --- finite-difference oracle ---------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int worst_index = -1;
};

// Compares the tape gradient of a scalar-valued function against central
// finite differences over every coordinate of every listed parameter.
// Relative error is |analytic - numeric| / max(1, |numeric|). 64-bit only.
GradCheckReport grad_check(
    const std::function<Tensor<double>(Tape<double>&)>& f,
    const std::vector<std::pair<std::string, Tensor<double>>>& params,
    double eps = 1e-5);

}  // namespace mfhi
