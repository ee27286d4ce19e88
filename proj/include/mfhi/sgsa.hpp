#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mfhi/tensor.hpp"

namespace mfhi {

// Attribute prediction module parameters: one classifier row per attribute.
template <typename T>
struct ApmParams {
  Tensor<T> weights;  // {Q, C}
  Tensor<T> bias;     // {Q}; all-zero when disabled

  int attributes() const { return weights.shape()[0]; }
  int channels() const { return weights.shape()[1]; }
};

template <typename T>
struct AttentionOutput {
  Tensor<T> scores;           // {Q}, each in (0,1)
  std::vector<int> selected;  // D indices, descending score then ascending index
  Tensor<T> attention;        // {1,H,W}
  Tensor<T> fused;            // {C,H,W}
  Tensor<T> feature;          // {C}, exactly gap(fused)
};

// sigmoid(W_apm * gap(F) + bias); one confidence per attribute.
template <typename T>
Tensor<T> apm_scores(const Tensor<T>& feature_map, const ApmParams<T>& params, Tape<T>* tape);

// Channel-weighted activation map of one attribute; values may be negative.
template <typename T>
Tensor<T> cam(const Tensor<T>& feature_map, const ApmParams<T>& params, int attribute,
              Tape<T>* tape);

// Indices of the D largest scores; ties resolved toward the lower index.
template <typename T>
std::vector<int> select_top_d(const Tensor<T>& scores, int d);

// Pointwise maximum of the given maps; with normalize, rectified at zero and
// divided by (max + 1e-8) so every entry lands in [0,1]. The raw maximum is
// kept for ablation.
template <typename T>
Tensor<T> attention_map(const std::vector<Tensor<T>>& cams, bool normalize, Tape<T>* tape);

// F' = (F (x) M_a) (+) F with the attention map broadcast across channels.
template <typename T>
Tensor<T> fuse(const Tensor<T>& feature_map, const Tensor<T>& attention, Tape<T>* tape);

// Full pipeline: scores -> Top-D CAMs -> attention map -> fusion -> GAP.
template <typename T>
AttentionOutput<T> visual_feature(const Tensor<T>& feature_map, const ApmParams<T>& params,
                                  int top_d, bool normalize, Tape<T>* tape);

// --- attention dump artifacts ----------------------------------------------
// Text header (image id, selected indices with scores), a "---" separator,
// then the attention map in the binary tensor container.

struct AttentionDump {
  std::string image_id;
  std::vector<std::pair<int, float>> selected;
  Tensor<float> attention;
};

void write_attention_dump(const std::filesystem::path& path, const std::string& image_id,
                          const AttentionOutput<float>& output);
AttentionDump read_attention_dump(const std::filesystem::path& path);

// 8-bit binary PGM, min-max scaled to 0..255.
void write_attention_pgm(const std::filesystem::path& path, const Tensor<float>& attention);

}  // namespace mfhi
