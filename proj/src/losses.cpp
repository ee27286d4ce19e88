#include "mfhi/losses.hpp"

#include <algorithm>
#include <cmath>

namespace mfhi {

namespace {
constexpr double kCosineClamp = 1e-7;
constexpr double kScoreClamp = 1e-7;
}  // namespace

void DcmConfig::validate() const {
  if (!(r > 0)) throw ConfigError("DcmConfig: feature scale r must be positive");
  if (!(d >= 0) || !(d < M_PI / 2))
    throw ConfigError("DcmConfig: angular margin d must lie in [0, pi/2)");
}

namespace detail {

template <typename T>
void margin_logit(T cos_y, const DcmConfig& cfg, T* logit, T* derivative) {
  const T r = static_cast<T>(cfg.r);
  const T cos_d = std::cos(static_cast<T>(cfg.d));
  const T sin_d = std::sin(static_cast<T>(cfg.d));
  if (cfg.stability == DcmStability::arcface_fallback && cos_y <= -cos_d) {
    *logit = r * (cos_y - static_cast<T>(cfg.d) * sin_d);
    *derivative = r;
    return;
  }
  T sin_y = std::sqrt(std::max(T(1) - cos_y * cos_y, T(0)));
  *logit = r * (cos_y * cos_d - sin_y * sin_d);
  if (sin_y < T(1e-6)) sin_y = T(1e-6);
  *derivative = r * (cos_d + cos_y * sin_d / sin_y);
}

template void margin_logit(float, const DcmConfig&, float*, float*);
template void margin_logit(double, const DcmConfig&, double*, double*);

}  // namespace detail

template <typename T>
Tensor<T> cea_loss(const Tensor<T>& scores, const std::vector<int>& targets, Tape<T>* tape) {
  const int q = scores.size();
  if (static_cast<int>(targets.size()) != q)
    throw DimensionError("cea_loss: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(q) + " scores");
  std::vector<T> pos(q), neg(q);
  for (int i = 0; i < q; ++i) {
    if (targets[i] != 0 && targets[i] != 1)
      throw ArgumentError("cea_loss: targets must be 0 or 1");
    pos[i] = static_cast<T>(targets[i]);
    neg[i] = static_cast<T>(1 - targets[i]);
  }
  Tensor<T> clamped =
      clamp(scores, static_cast<T>(kScoreClamp), static_cast<T>(1.0 - kScoreClamp), tape);
  Tensor<T> log_p = log(clamped, tape);
  Tensor<T> log_not_p = log(affine(clamped, T(-1), T(1), tape), tape);
  Tensor<T> terms = elementwise(elementwise(log_p, Tensor<T>({q}, std::move(pos)), EwOp::mul, tape),
                                elementwise(log_not_p, Tensor<T>({q}, std::move(neg)), EwOp::mul, tape),
                                EwOp::add, tape);
  return affine(reduce_sum(terms, tape), T(-1), T(0), tape);
}

template <typename T>
Tensor<T> cosine_angles(const Tensor<T>& v, const Tensor<T>& prototypes, Tape<T>* tape) {
  if (prototypes.rank() != 2 || v.rank() != 1 || prototypes.shape()[1] != v.size())
    throw DimensionError("cosine_angles: feature and prototype dimensions disagree");
  Tensor<T> v_hat = l2_normalize(v, tape);
  Tensor<T> m_hat = l2_normalize_rows(prototypes, tape);
  Tensor<T> cos = matmul(m_hat, reshape(v_hat, {v.size(), 1}, tape), tape);
  cos = reshape(cos, {prototypes.shape()[0]}, tape);
  return clamp(cos, static_cast<T>(-1.0 + kCosineClamp), static_cast<T>(1.0 - kCosineClamp), tape);
}

std::vector<double> dcm_probability(const std::vector<double>& cosines, int target,
                                    const DcmConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(cosines.size());
  if (target < 0 || target >= n)
    throw ArgumentError("dcm_probability: target index out of range");
  std::vector<double> logits(n);
  for (int j = 0; j < n; ++j) logits[j] = cfg.r * cosines[j];
  double derivative;
  detail::margin_logit(cosines[target], cfg, &logits[target], &derivative);
  const double peak = *std::max_element(logits.begin(), logits.end());
  double denom = 0;
  for (double& l : logits) {
    l = std::exp(l - peak);
    denom += l;
  }
  for (double& l : logits) l /= denom;
  return logits;
}

template <typename T>
Tensor<T> dcm_logits(const Tensor<T>& cosines, int target, const DcmConfig& cfg, Tape<T>* tape) {
  cfg.validate();
  if (cosines.rank() != 1) throw DimensionError("dcm_logits: expects a rank-1 cosine vector");
  const int n = cosines.size();
  if (target < 0 || target >= n) throw ArgumentError("dcm_logits: target index out of range");
  Tensor<T> out(cosines.shape());
  const T r = static_cast<T>(cfg.r);
  for (int j = 0; j < n; ++j) out[j] = r * cosines[j];
  T derivative;
  detail::margin_logit(cosines[target], cfg, &out[target], &derivative);
  detail::check_finite(out, "dcm_logits");
  if (tape && cosines.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cc = cosines, co = out;
    tape->record([cc, co, target, r, derivative, n]() mutable {
      const auto& g = co.grad();
      auto& gc = cc.grad();
      for (int j = 0; j < n; ++j) gc[j] += g[j] * (j == target ? derivative : r);
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, int target, Tape<T>* tape) {
  if (logits.rank() != 1) throw DimensionError("cross_entropy_logits: expects rank-1 logits");
  const int n = logits.size();
  if (target < 0 || target >= n)
    throw ArgumentError("cross_entropy_logits: target index out of range");
  T peak = logits[0];
  for (int j = 1; j < n; ++j) peak = std::max(peak, logits[j]);
  T denom = 0;
  for (int j = 0; j < n; ++j) denom += std::exp(logits[j] - peak);
  Tensor<T> out({1});
  out[0] = std::log(denom) + peak - logits[target];
  detail::check_finite(out, "cross_entropy_logits");
  if (tape && logits.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<T> cl = logits, co = out;
    tape->record([cl, co, target, peak, denom, n]() mutable {
      const T g = co.grad()[0];
      auto& gl = cl.grad();
      for (int j = 0; j < n; ++j) {
        const T softmax_j = std::exp(cl[j] - peak) / denom;
        gl[j] += g * (softmax_j - (j == target ? T(1) : T(0)));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dcm_sample_loss(const Tensor<T>& v, const Tensor<T>& prototypes, int target,
                          const DcmConfig& cfg, Tape<T>* tape) {
  Tensor<T> cosines = cosine_angles(v, prototypes, tape);
  return cross_entropy_logits(dcm_logits(cosines, target, cfg, tape), target, tape);
}

template <typename T>
Tensor<T> dcm_loss(const EpisodeBatch<T>& batch, const DcmConfig& cfg, Tape<T>* tape) {
  if (batch.features.empty()) throw ArgumentError("dcm_loss: empty batch");
  if (batch.features.size() != batch.labels.size())
    throw DimensionError("dcm_loss: feature and label counts disagree");
  const int n = batch.prototypes.shape()[0];
  Tensor<T> total;
  for (size_t i = 0; i < batch.features.size(); ++i) {
    if (batch.labels[i] < 0 || batch.labels[i] >= n)
      throw ArgumentError("dcm_loss: label " + std::to_string(batch.labels[i]) +
                          " does not index a prototype row");
    Tensor<T> term =
        dcm_sample_loss(batch.features[i], batch.prototypes, batch.labels[i], cfg, tape);
    total = i == 0 ? term : elementwise(total, term, EwOp::add, tape);
  }
  return affine(total, T(1) / static_cast<T>(batch.features.size()), T(0), tape);
}

#define MFHI_INSTANTIATE(T)                                                             \
  template Tensor<T> cea_loss(const Tensor<T>&, const std::vector<int>&, Tape<T>*);     \
  template Tensor<T> cosine_angles(const Tensor<T>&, const Tensor<T>&, Tape<T>*);       \
  template Tensor<T> dcm_logits(const Tensor<T>&, int, const DcmConfig&, Tape<T>*);     \
  template Tensor<T> cross_entropy_logits(const Tensor<T>&, int, Tape<T>*);             \
  template Tensor<T> dcm_sample_loss(const Tensor<T>&, const Tensor<T>&, int,           \
                                     const DcmConfig&, Tape<T>*);                       \
  template Tensor<T> dcm_loss(const EpisodeBatch<T>&, const DcmConfig&, Tape<T>*);

MFHI_INSTANTIATE(float)
MFHI_INSTANTIATE(double)
#undef MFHI_INSTANTIATE

}  // namespace mfhi
