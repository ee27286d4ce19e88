#pragma once

#include <string>
#include <vector>

#include "mfhi/tensor.hpp"

namespace mfhi {

// Two-layer perceptron mapping a category-level attribute vector into the
// visual feature space.
template <typename T>
struct MlpParams {
  Tensor<T> w1;  // {Q, H}
  Tensor<T> b1;  // {H}
  Tensor<T> w2;  // {H, C}
  Tensor<T> b2;  // {C}

  int inputs() const { return w1.shape()[0]; }
  int hidden() const { return w1.shape()[1]; }
  int outputs() const { return w2.shape()[1]; }
};

// Coordinate-wise mean of image-level attribute vectors.
std::vector<double> category_attribute(const std::vector<std::vector<double>>& image_attrs);
std::vector<double> category_attribute(const std::vector<std::vector<int>>& image_attrs);

// m = W2 * relu(W1 * a + b1) + b2 for a single {Q} vector.
template <typename T>
Tensor<T> prototype(const Tensor<T>& category_attr, const MlpParams<T>& params, Tape<T>* tape);

// Batched form: {N,Q} -> {N,C}.
template <typename T>
Tensor<T> prototypes_batch(const Tensor<T>& category_attrs, const MlpParams<T>& params,
                           Tape<T>* tape);

// One prototype row per identity; rows stay raw, normalization happens in
// loss and recognition code.
struct PrototypeSet {
  enum class Source { plm, fc_weights };
  Tensor<float> prototypes;      // {N, C}
  std::vector<std::string> ids;  // N labels, unique
  Source source = Source::plm;
};

// Wraps a classifier weight matrix as a prototype set; storage is shared, so
// in I2I training the rows remain the trainable parameters.
PrototypeSet fc_prototypes(const Tensor<float>& weights, std::vector<std::string> ids = {});

}  // namespace mfhi
