#pragma once

#include <vector>

#include "mfhi/tensor.hpp"

namespace mfhi {

enum class DcmStability {
  // Below the monotonic range of cos(theta + d), fall back to the linear
  // surrogate r * (cos(theta) - d * sin(d)).
  arcface_fallback,
  // Apply the margined cosine verbatim everywhere.
  strict,
};

struct DcmConfig {
  double r = 16.0;  // hypersphere radius / feature scale
  double d = 0.2;   // additive angular margin, radians
  DcmStability stability = DcmStability::arcface_fallback;

  void validate() const;
};

// Per-attribute binary cross entropy, summed over attributes. Scores are
// clamped to [1e-7, 1-1e-7] before the logs.
template <typename T>
Tensor<T> cea_loss(const Tensor<T>& scores, const std::vector<int>& targets, Tape<T>* tape);

// cos(theta_j) between v and every prototype row, clamped to
// [-1+1e-7, 1-1e-7]. Throws DegenerateInputError naming the offending row.
template <typename T>
Tensor<T> cosine_angles(const Tensor<T>& v, const Tensor<T>& prototypes, Tape<T>* tape);

// Class probabilities under the angular-margin softmax: the target logit is
// r*cos(theta_y + d), the rest stay r*cos(theta_l). With d = 0 this is the
// plain scaled softmax, bit for bit. Forward-only.
std::vector<double> dcm_probability(const std::vector<double>& cosines, int target,
                                    const DcmConfig& cfg);

// Differentiable logits for the same construction.
template <typename T>
Tensor<T> dcm_logits(const Tensor<T>& cosines, int target, const DcmConfig& cfg, Tape<T>* tape);

// Numerically stable -log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, int target, Tape<T>* tape);

// -log p(x in m_y | x) for one sample against raw prototype rows.
template <typename T>
Tensor<T> dcm_sample_loss(const Tensor<T>& v, const Tensor<T>& prototypes, int target,
                          const DcmConfig& cfg, Tape<T>* tape);

// One episodic batch at the loss level.
template <typename T>
struct EpisodeBatch {
  std::vector<Tensor<T>> features;                  // visual features v, each {C}
  std::vector<int> labels;                          // episode-local, index prototype rows
  Tensor<T> prototypes;                             // {N, C}, raw
  std::vector<std::vector<int>> attribute_targets;  // per sample, binary
};

// Mean over samples of the per-sample DCM cross entropy.
template <typename T>
Tensor<T> dcm_loss(const EpisodeBatch<T>& batch, const DcmConfig& cfg, Tape<T>* tape);

struct LossWeights {
  double cea = 1.0;
  double dcm = 1.0;
};

namespace detail {
// Shared scalar path for the margined target logit: returns the logit and
// its derivative with respect to cos(theta_y), both already scaled by r.
template <typename T>
void margin_logit(T cos_y, const DcmConfig& cfg, T* logit, T* derivative);
}  // namespace detail

}  // namespace mfhi
