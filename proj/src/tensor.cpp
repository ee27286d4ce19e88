#include "mfhi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace mfhi {

namespace detail {

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (const T v : t.value()) {
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

template void check_finite(const Tensor<float>&, const char*);
template void check_finite(const Tensor<double>&, const char*);

}  // namespace detail

template <typename T>
void Tape<T>::backward(Tensor<T> root) {
  if (consumed_) throw ArgumentError("Tape::backward: tape already consumed");
  if (root.size() != 1)
    throw DimensionError("Tape::backward: root must be a scalar");
  consumed_ = true;
  if (!root.requires_grad()) return;  // nothing reachable
  root.grad()[0] += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

template class Tape<float>;
template class Tape<double>;

namespace {

template <typename T>
bool want_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "{";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul: expects rank-2 operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out({m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * n + j];
      po[i * n + j] = acc;
    }
  }
  detail::check_finite(out, "matmul");
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor<T> ca = a, cb = b, co = out;
    tape->record([ca, cb, co, m, n, k]() mutable {
      const auto& g = co.grad();
      if (ca.requires_grad()) {
        auto& ga = ca.grad();
        const T* pb2 = cb.data();
        for (int i = 0; i < m; ++i)
          for (int t = 0; t < k; ++t) {
            T acc = 0;
            for (int j = 0; j < n; ++j) acc += g[i * n + j] * pb2[t * n + j];
            ga[i * k + t] += acc;
          }
      }
      if (cb.requires_grad()) {
        auto& gb = cb.grad();
        const T* pa2 = ca.data();
        for (int t = 0; t < k; ++t)
          for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int i = 0; i < m; ++i) acc += pa2[i * k + t] * g[i * n + j];
            gb[t * n + j] += acc;
          }
      }
    });
  }
  return out;
}

namespace {

// Index map from a's flat index to b's flat index for the supported
// broadcast forms. Throws if the shapes fit none of them.
template <typename T>
std::function<int(int)> broadcast_map(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.size() == 1) return [](int) { return 0; };
  if (a.shape() == b.shape()) return [](int i) { return i; };
  if (a.rank() == 3 && b.rank() == 3 && b.shape()[0] == 1 &&
      b.shape()[1] == a.shape()[1] && b.shape()[2] == a.shape()[2]) {
    const int hw = a.shape()[1] * a.shape()[2];
    return [hw](int i) { return i % hw; };
  }
  if (a.rank() == 2 &&
      ((b.rank() == 1 && b.shape()[0] == a.shape()[1]) ||
       (b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == a.shape()[1]))) {
    const int n = a.shape()[1];
    return [n](int i) { return i % n; };
  }
  throw DimensionError("elementwise: shape " + shape_str(b.shape()) +
                       " does not broadcast against " + shape_str(a.shape()));
}

}  // namespace

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, EwOp op, Tape<T>* tape) {
  auto bmap = broadcast_map(a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const int n = a.size();
  switch (op) {
    case EwOp::add:
      for (int i = 0; i < n; ++i) po[i] = pa[i] + pb[bmap(i)];
      break;
    case EwOp::mul:
      for (int i = 0; i < n; ++i) po[i] = pa[i] * pb[bmap(i)];
      break;
    case EwOp::max:
      for (int i = 0; i < n; ++i) po[i] = std::max(pa[i], pb[bmap(i)]);
      break;
  }
  detail::check_finite(out, "elementwise");
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor<T> ca = a, cb = b, co = out;
    tape->record([ca, cb, co, op, bmap, n]() mutable {
      const auto& g = co.grad();
      const T* pa2 = ca.data();
      const T* pb2 = cb.data();
      const bool ga = ca.requires_grad(), gb = cb.requires_grad();
      auto* agrad = ga ? &ca.grad() : nullptr;
      auto* bgrad = gb ? &cb.grad() : nullptr;
      for (int i = 0; i < n; ++i) {
        const int j = bmap(i);
        switch (op) {
          case EwOp::add:
            if (ga) (*agrad)[i] += g[i];
            if (gb) (*bgrad)[j] += g[i];
            break;
          case EwOp::mul:
            if (ga) (*agrad)[i] += g[i] * pb2[j];
            if (gb) (*bgrad)[j] += g[i] * pa2[i];
            break;
          case EwOp::max:
            if (pa2[i] >= pb2[j]) {  // tie goes to the first input
              if (ga) (*agrad)[i] += g[i];
            } else if (gb) {
              (*bgrad)[j] += g[i];
            }
            break;
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> pointwise(const Tensor<T>& x, Tape<T>* tape, const char* name, Fwd fwd, Bwd bwd) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const int n = x.size();
  for (int i = 0; i < n; ++i) po[i] = fwd(px[i]);
  detail::check_finite(out, name);
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cx = x, co = out;
    tape->record([cx, co, bwd, n]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      const T* px2 = cx.data();
      const T* po2 = co.data();
      for (int i = 0; i < n; ++i) gx[i] += g[i] * bwd(px2[i], po2[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x, Tape<T>* tape) {
  return pointwise(
      x, tape, "sigmoid",
      [](T v) -> T {
        if (v >= 0) {
          const T e = std::exp(-v);
          return T(1) / (T(1) + e);
        }
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) -> T { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape) {
  return pointwise(
      x, tape, "relu", [](T v) -> T { return v > 0 ? v : T(0); },
      [](T v, T) -> T { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x, Tape<T>* tape) {
  return pointwise(
      x, tape, "log", [](T v) -> T { return std::log(v); },
      [](T v, T) -> T { return T(1) / v; });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& x, Tape<T>* tape) {
  return pointwise(
      x, tape, "reciprocal", [](T v) -> T { return T(1) / v; },
      [](T v, T) -> T { return T(-1) / (v * v); });
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift, Tape<T>* tape) {
  return pointwise(
      x, tape, "affine", [scale, shift](T v) -> T { return scale * v + shift; },
      [scale](T, T) -> T { return scale; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi, Tape<T>* tape) {
  if (lo > hi) throw ArgumentError("clamp: lo must not exceed hi");
  return pointwise(
      x, tape, "clamp",
      [lo, hi](T v) -> T { return std::min(std::max(v, lo), hi); },
      [lo, hi](T v, T) -> T { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gap(const Tensor<T>& f, Tape<T>* tape) {
  if (f.rank() != 3)
    throw DimensionError("gap: expects a {C,H,W} tensor, got " + shape_str(f.shape()));
  const int c = f.shape()[0], hw = f.shape()[1] * f.shape()[2];
  Tensor<T> out({c});
  const T* pf = f.data();
  for (int i = 0; i < c; ++i) {
    T acc = 0;
    for (int j = 0; j < hw; ++j) acc += pf[i * hw + j];
    out[i] = acc / static_cast<T>(hw);
  }
  detail::check_finite(out, "gap");
  if (tape && f.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cf = f, co = out;
    tape->record([cf, co, c, hw]() mutable {
      const auto& g = co.grad();
      auto& gf = cf.grad();
      for (int i = 0; i < c; ++i) {
        const T share = g[i] / static_cast<T>(hw);
        for (int j = 0; j < hw; ++j) gf[i * hw + j] += share;
      }
    });
  }
  return out;
}

namespace {

template <typename T>
void normalize_span(const T* x, T* y, int n, int row, bool rows) {
  T sq = 0;
  for (int i = 0; i < n; ++i) sq += x[i] * x[i];
  const T norm = std::sqrt(sq);
  if (norm < T(1e-12)) {
    std::string what = rows ? "l2_normalize_rows: row " + std::to_string(row) +
                                  " has near-zero norm"
                            : "l2_normalize: input has near-zero norm";
    throw DegenerateInputError(what);
  }
  for (int i = 0; i < n; ++i) y[i] = x[i] / norm;
}

// dL/dx = (g - y * <g, y>) / ||x||
template <typename T>
void normalize_backward_span(const T* x, const T* y, const T* g, T* gx, int n) {
  T sq = 0;
  for (int i = 0; i < n; ++i) sq += x[i] * x[i];
  const T norm = std::sqrt(sq);
  T dot = 0;
  for (int i = 0; i < n; ++i) dot += g[i] * y[i];
  for (int i = 0; i < n; ++i) gx[i] += (g[i] - y[i] * dot) / norm;
}

}  // namespace

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v, Tape<T>* tape) {
  if (v.rank() != 1)
    throw DimensionError("l2_normalize: expects a rank-1 tensor, got " + shape_str(v.shape()));
  const int n = v.size();
  Tensor<T> out(v.shape());
  normalize_span(v.data(), out.data(), n, 0, false);
  detail::check_finite(out, "l2_normalize");
  if (tape && v.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cv = v, co = out;
    tape->record([cv, co, n]() mutable {
      normalize_backward_span(cv.data(), co.data(), co.grad().data(),
                              cv.grad().data(), n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& m, Tape<T>* tape) {
  if (m.rank() != 2)
    throw DimensionError("l2_normalize_rows: expects a rank-2 tensor, got " +
                         shape_str(m.shape()));
  const int r = m.shape()[0], c = m.shape()[1];
  Tensor<T> out(m.shape());
  for (int i = 0; i < r; ++i)
    normalize_span(m.data() + i * c, out.data() + i * c, c, i, true);
  detail::check_finite(out, "l2_normalize_rows");
  if (tape && m.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cm = m, co = out;
    tape->record([cm, co, r, c]() mutable {
      for (int i = 0; i < r; ++i)
        normalize_backward_span(cm.data() + i * c, co.data() + i * c,
                                co.grad().data() + i * c, cm.grad().data() + i * c, c);
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, Tape<T>* tape) {
  Tensor<T> out({1});
  T acc = 0;
  for (int i = 0; i < x.size(); ++i) acc += x[i];
  out[0] = acc;
  detail::check_finite(out, "reduce_sum");
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cx = x, co = out;
    tape->record([cx, co]() mutable {
      const T g = co.grad()[0];
      auto& gx = cx.grad();
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce_max(const Tensor<T>& x, Tape<T>* tape) {
  if (x.size() == 0) throw ArgumentError("reduce_max: empty input");
  int arg = 0;
  for (int i = 1; i < x.size(); ++i)
    if (x[i] > x[arg]) arg = i;
  Tensor<T> out({1});
  out[0] = x[arg];
  detail::check_finite(out, "reduce_max");
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cx = x, co = out;
    tape->record([cx, co, arg]() mutable { cx.grad()[arg] += co.grad()[0]; });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape, Tape<T>* tape) {
  Tensor<T> out(std::move(shape), x.value());
  if (out.size() != x.size())
    throw DimensionError("reshape: element count changes from " +
                         std::to_string(x.size()) + " to " + std::to_string(out.size()));
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cx = x, co = out;
    tape->record([cx, co]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> take_rows(const Tensor<T>& m, const std::vector<int>& rows, Tape<T>* tape) {
  if (m.rank() != 2)
    throw DimensionError("take_rows: expects a rank-2 tensor, got " + shape_str(m.shape()));
  if (rows.empty()) throw ArgumentError("take_rows: empty row list");
  const int r = m.shape()[0], c = m.shape()[1];
  for (int idx : rows)
    if (idx < 0 || idx >= r)
      throw ArgumentError("take_rows: row index " + std::to_string(idx) +
                          " out of range [0," + std::to_string(r) + ")");
  Tensor<T> out({static_cast<int>(rows.size()), c});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(m.data() + rows[i] * c, m.data() + (rows[i] + 1) * c,
              out.data() + static_cast<int>(i) * c);
  if (tape && m.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cm = m, co = out;
    std::vector<int> idx = rows;
    tape->record([cm, co, idx, c]() mutable {
      const auto& g = co.grad();
      auto& gm = cm.grad();
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < c; ++j) gm[idx[i] * c + j] += g[i * c + j];
    });
  }
  return out;
}

GradCheckReport grad_check(
    const std::function<Tensor<double>(Tape<double>&)>& f,
    const std::vector<std::pair<std::string, Tensor<double>>>& params,
    double eps) {
  for (auto& [name, p] : params) {
    const_cast<Tensor<double>&>(p).set_requires_grad(true);
    const_cast<Tensor<double>&>(p).zero_grad();
  }

  Tape<double> tape;
  Tensor<double> out = f(tape);
  if (out.size() != 1) throw DimensionError("grad_check: f must return a scalar");
  if (!std::isfinite(out[0]))
    throw NumericError("grad_check: f is non-finite at the base point");
  if (out.requires_grad()) tape.backward(out);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) analytic.push_back(p.grad());

  auto eval = [&f](const std::string& where) -> double {
    Tape<double> scratch;
    double value;
    try {
      value = f(scratch)[0];
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " while perturbing " + where);
    }
    if (!std::isfinite(value)) throw NumericError("grad_check: f is non-finite at " + where);
    return value;
  };

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& p = const_cast<Tensor<double>&>(params[pi].second);
    const std::string& name = params[pi].first;
    for (int i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      const std::string where = name + "[" + std::to_string(i) + "]";
      p[i] = saved + eps;
      const double plus = eval(where);
      p[i] = saved - eps;
      const double minus = eval(where);
      p[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double rel =
          std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

#define MFHI_INSTANTIATE(T)                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, Tape<T>*);        \
  template Tensor<T> elementwise(const Tensor<T>&, const Tensor<T>&, EwOp, Tape<T>*); \
  template Tensor<T> sigmoid(const Tensor<T>&, Tape<T>*);                         \
  template Tensor<T> relu(const Tensor<T>&, Tape<T>*);                            \
  template Tensor<T> log(const Tensor<T>&, Tape<T>*);                             \
  template Tensor<T> reciprocal(const Tensor<T>&, Tape<T>*);                      \
  template Tensor<T> affine(const Tensor<T>&, T, T, Tape<T>*);                    \
  template Tensor<T> clamp(const Tensor<T>&, T, T, Tape<T>*);                     \
  template Tensor<T> gap(const Tensor<T>&, Tape<T>*);                             \
  template Tensor<T> l2_normalize(const Tensor<T>&, Tape<T>*);                    \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, Tape<T>*);               \
  template Tensor<T> reduce_sum(const Tensor<T>&, Tape<T>*);                      \
  template Tensor<T> reduce_max(const Tensor<T>&, Tape<T>*);                      \
  template Tensor<T> reshape(const Tensor<T>&, std::vector<int>, Tape<T>*);       \
  template Tensor<T> take_rows(const Tensor<T>&, const std::vector<int>&, Tape<T>*);

MFHI_INSTANTIATE(float)
MFHI_INSTANTIATE(double)
#undef MFHI_INSTANTIATE

}  // namespace mfhi
