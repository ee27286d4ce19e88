#include "mfhi/plm.hpp"

namespace mfhi {

namespace {

template <typename V>
std::vector<double> mean_vectors(const std::vector<std::vector<V>>& image_attrs) {
  if (image_attrs.empty())
    throw ArgumentError("category_attribute: empty attribute list");
  const size_t q = image_attrs.front().size();
  std::vector<double> out(q, 0.0);
  for (const auto& attrs : image_attrs) {
    if (attrs.size() != q)
      throw DimensionError("category_attribute: inconsistent attribute lengths");
    for (size_t i = 0; i < q; ++i) {
      const double v = static_cast<double>(attrs[i]);
      if (v < 0.0 || v > 1.0)
        throw ArgumentError("category_attribute: entries must lie in [0,1]");
      out[i] += v;
    }
  }
  for (auto& v : out) v /= static_cast<double>(image_attrs.size());
  return out;
}

}  // namespace

std::vector<double> category_attribute(const std::vector<std::vector<double>>& image_attrs) {
  return mean_vectors(image_attrs);
}

std::vector<double> category_attribute(const std::vector<std::vector<int>>& image_attrs) {
  return mean_vectors(image_attrs);
}

template <typename T>
Tensor<T> prototypes_batch(const Tensor<T>& category_attrs, const MlpParams<T>& params,
                           Tape<T>* tape) {
  if (category_attrs.rank() != 2 || category_attrs.shape()[1] != params.inputs())
    throw DimensionError("prototypes_batch: expected {N," + std::to_string(params.inputs()) +
                         "} attribute matrix");
  Tensor<T> hidden = elementwise(matmul(category_attrs, params.w1, tape), params.b1,
                                 EwOp::add, tape);
  hidden = relu(hidden, tape);
  return elementwise(matmul(hidden, params.w2, tape), params.b2, EwOp::add, tape);
}

template <typename T>
Tensor<T> prototype(const Tensor<T>& category_attr, const MlpParams<T>& params, Tape<T>* tape) {
  if (category_attr.rank() != 1 || category_attr.size() != params.inputs())
    throw DimensionError("prototype: expected a {" + std::to_string(params.inputs()) +
                         "} attribute vector");
  Tensor<T> batched = reshape(category_attr, {1, params.inputs()}, tape);
  return reshape(prototypes_batch(batched, params, tape), {params.outputs()}, tape);
}

template Tensor<float> prototypes_batch(const Tensor<float>&, const MlpParams<float>&, Tape<float>*);
template Tensor<double> prototypes_batch(const Tensor<double>&, const MlpParams<double>&, Tape<double>*);
template Tensor<float> prototype(const Tensor<float>&, const MlpParams<float>&, Tape<float>*);
template Tensor<double> prototype(const Tensor<double>&, const MlpParams<double>&, Tape<double>*);

PrototypeSet fc_prototypes(const Tensor<float>& weights, std::vector<std::string> ids) {
  if (weights.rank() != 2)
    throw DimensionError("fc_prototypes: expected a {K,C} weight matrix");
  PrototypeSet set;
  set.prototypes = weights;  // aliases the trainable storage
  set.source = PrototypeSet::Source::fc_weights;
  if (ids.empty()) {
    for (int i = 0; i < weights.shape()[0]; ++i) ids.push_back(std::to_string(i));
  } else if (static_cast<int>(ids.size()) != weights.shape()[0]) {
    throw DimensionError("fc_prototypes: id count does not match weight rows");
  }
  set.ids = std::move(ids);
  return set;
}

}  // namespace mfhi
