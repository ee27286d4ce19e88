#include "mfhi/sgsa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mfhi/dataset.hpp"

namespace mfhi {

template <typename T>
Tensor<T> apm_scores(const Tensor<T>& feature_map, const ApmParams<T>& params, Tape<T>* tape) {
  if (feature_map.rank() != 3 || feature_map.shape()[0] != params.channels())
    throw DimensionError("apm_scores: feature map channels do not match the classifier (" +
                         std::to_string(feature_map.rank() == 3 ? feature_map.shape()[0] : -1) +
                         " vs " + std::to_string(params.channels()) + ")");
  Tensor<T> pooled = gap(feature_map, tape);
  Tensor<T> logits = matmul(params.weights, reshape(pooled, {params.channels(), 1}, tape), tape);
  logits = elementwise(reshape(logits, {params.attributes()}, tape), params.bias, EwOp::add, tape);
  return sigmoid(logits, tape);
}

template <typename T>
Tensor<T> cam(const Tensor<T>& feature_map, const ApmParams<T>& params, int attribute,
              Tape<T>* tape) {
  if (attribute < 0 || attribute >= params.attributes())
    throw ArgumentError("cam: attribute index " + std::to_string(attribute) +
                        " out of range [0," + std::to_string(params.attributes()) + ")");
  if (feature_map.rank() != 3 || feature_map.shape()[0] != params.channels())
    throw DimensionError("cam: feature map channels do not match the classifier");
  const int c = feature_map.shape()[0];
  const int h = feature_map.shape()[1], w = feature_map.shape()[2];
  Tensor<T> row = take_rows(params.weights, {attribute}, tape);            // {1,C}
  Tensor<T> flat = reshape(feature_map, {c, h * w}, tape);                 // {C,HW}
  return reshape(matmul(row, flat, tape), {h, w}, tape);
}

template <typename T>
std::vector<int> select_top_d(const Tensor<T>& scores, int d) {
  const int q = scores.size();
  if (d < 1 || d > q)
    throw ArgumentError("select_top_d: D=" + std::to_string(d) + " out of range [1," +
                        std::to_string(q) + "]");
  std::vector<int> idx(q);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&scores](int a, int b) { return scores[a] > scores[b]; });
  idx.resize(d);
  return idx;
}

template <typename T>
Tensor<T> attention_map(const std::vector<Tensor<T>>& cams, bool normalize, Tape<T>* tape) {
  if (cams.empty()) throw ArgumentError("attention_map: no activation maps given");
  for (const auto& m : cams)
    if (m.rank() != 2 || m.shape() != cams.front().shape())
      throw DimensionError("attention_map: activation maps must share one {H,W} shape");
  Tensor<T> merged = cams.front();
  for (size_t i = 1; i < cams.size(); ++i)
    merged = elementwise(merged, cams[i], EwOp::max, tape);
  const int h = merged.shape()[0], w = merged.shape()[1];
  if (!normalize) return reshape(merged, {1, h, w}, tape);
  Tensor<T> rectified = relu(merged, tape);
  Tensor<T> peak = affine(reduce_max(rectified, tape), T(1), T(1e-8), tape);
  Tensor<T> scaled = elementwise(rectified, reciprocal(peak, tape), EwOp::mul, tape);
  return reshape(scaled, {1, h, w}, tape);
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& feature_map, const Tensor<T>& attention, Tape<T>* tape) {
  if (feature_map.rank() != 3 || attention.rank() != 3 || attention.shape()[0] != 1 ||
      attention.shape()[1] != feature_map.shape()[1] ||
      attention.shape()[2] != feature_map.shape()[2])
    throw DimensionError("fuse: attention map must be {1,H,W} matching the feature map");
  Tensor<T> weighted = elementwise(feature_map, attention, EwOp::mul, tape);
  return elementwise(weighted, feature_map, EwOp::add, tape);
}

template <typename T>
AttentionOutput<T> visual_feature(const Tensor<T>& feature_map, const ApmParams<T>& params,
                                  int top_d, bool normalize, Tape<T>* tape) {
  AttentionOutput<T> out;
  out.scores = apm_scores(feature_map, params, tape);
  out.selected = select_top_d(out.scores, top_d);
  std::vector<Tensor<T>> cams;
  cams.reserve(out.selected.size());
  for (int attribute : out.selected) cams.push_back(cam(feature_map, params, attribute, tape));
  out.attention = attention_map(cams, normalize, tape);
  out.fused = fuse(feature_map, out.attention, tape);
  out.feature = gap(out.fused, tape);
  return out;
}

#define MFHI_INSTANTIATE(T)                                                              \
  template Tensor<T> apm_scores(const Tensor<T>&, const ApmParams<T>&, Tape<T>*);        \
  template Tensor<T> cam(const Tensor<T>&, const ApmParams<T>&, int, Tape<T>*);          \
  template std::vector<int> select_top_d(const Tensor<T>&, int);                         \
  template Tensor<T> attention_map(const std::vector<Tensor<T>>&, bool, Tape<T>*);       \
  template Tensor<T> fuse(const Tensor<T>&, const Tensor<T>&, Tape<T>*);                 \
  template AttentionOutput<T> visual_feature(const Tensor<T>&, const ApmParams<T>&, int, \
                                             bool, Tape<T>*);

MFHI_INSTANTIATE(float)
MFHI_INSTANTIATE(double)
#undef MFHI_INSTANTIATE

// --- dump artifacts ------------------------------------------------------------

void write_attention_dump(const std::filesystem::path& path, const std::string& image_id,
                          const AttentionOutput<float>& output) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_attention_dump: cannot open " + path.string());
  out << "image " << image_id << "\n";
  out << "selected";
  char buf[32];
  for (int attribute : output.selected) {
    std::snprintf(buf, sizeof(buf), " %d:%.6f", attribute, output.scores[attribute]);
    out << buf;
  }
  out << "\n---\n";
  write_tensor(out, output.attention);
  if (!out) throw IoError("write_attention_dump: write failed for " + path.string());
}

AttentionDump read_attention_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_attention_dump: cannot open " + path.string());
  AttentionDump dump;
  std::string line;
  if (!std::getline(in, line) || line.rfind("image ", 0) != 0)
    throw FormatError("read_attention_dump: missing image header in " + path.string());
  dump.image_id = line.substr(6);
  if (!std::getline(in, line) || line.rfind("selected", 0) != 0)
    throw FormatError("read_attention_dump: missing selected header in " + path.string());
  std::istringstream fields(line.substr(8));
  std::string field;
  while (fields >> field) {
    const auto colon = field.find(':');
    if (colon == std::string::npos)
      throw FormatError("read_attention_dump: malformed selected entry \"" + field + "\"");
    dump.selected.emplace_back(std::stoi(field.substr(0, colon)),
                               std::stof(field.substr(colon + 1)));
  }
  if (!std::getline(in, line) || line != "---")
    throw FormatError("read_attention_dump: missing separator in " + path.string());
  dump.attention = read_tensor(in, path.string());
  return dump;
}

void write_attention_pgm(const std::filesystem::path& path, const Tensor<float>& attention) {
  int h = 0, w = 0;
  if (attention.rank() == 3 && attention.shape()[0] == 1) {
    h = attention.shape()[1];
    w = attention.shape()[2];
  } else if (attention.rank() == 2) {
    h = attention.shape()[0];
    w = attention.shape()[1];
  } else {
    throw DimensionError("write_attention_pgm: expects a {1,H,W} or {H,W} map");
  }
  const auto [lo_it, hi_it] = std::minmax_element(attention.value().begin(), attention.value().end());
  const float lo = *lo_it, hi = *hi_it;
  const float span = hi - lo;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_attention_pgm: cannot open " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  for (float v : attention.value()) {
    const int scaled = span > 0 ? static_cast<int>(std::lround((v - lo) / span * 255.0f)) : 0;
    out.put(static_cast<char>(std::clamp(scaled, 0, 255)));
  }
  if (!out) throw IoError("write_attention_pgm: write failed for " + path.string());
}

}  // namespace mfhi
