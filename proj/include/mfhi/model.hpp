#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mfhi/losses.hpp"
#include "mfhi/plm.hpp"
#include "mfhi/rng.hpp"
#include "mfhi/sgsa.hpp"
#include "mfhi/tensor.hpp"

namespace mfhi {

enum class TrainMode { i2a, i2i };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T> tensor;  // aliases the model storage
  bool is_bias = false;
};

// All trainable state plus the knobs recognition needs to recompute visual
// features the way training did. The feature provider itself is frozen;
// only the attribute classifier, the prototype MLP and (in I2I mode) the
// classifier rows train.
template <typename T>
struct Model {
  TrainMode mode = TrainMode::i2a;
  int channels = 0, height = 0, width = 0, attributes = 0;
  int top_d = 10;
  int hidden = 0;
  bool normalize_attention = true;
  bool use_attention = true;
  DcmConfig dcm;

  ApmParams<T> apm;
  MlpParams<T> mlp;                          // prototype-MLP modes
  Tensor<T> fc_weights;                      // {K, C}, I2I mode only
  std::vector<std::string> fc_identity_ids;  // row -> identity id

  std::vector<ParamRef<T>> named_params();
  void zero_grads();

  // Visual feature of one image as recognition sees it.
  Tensor<T> image_feature(const Tensor<T>& feature_map, Tape<T>* tape) const;

  template <typename U>
  Model<U> cast() const;
};

struct ModelSpec {
  TrainMode mode = TrainMode::i2a;
  int channels = 0, height = 0, width = 0, attributes = 0;
  int top_d = 10;
  int hidden = 0;
  bool normalize_attention = true;
  bool use_attention = true;
  DcmConfig dcm;
  std::vector<std::string> fc_identity_ids;  // required for i2i
};

// Fan-in uniform initialization, fully determined by the rng stream.
template <typename T>
Model<T> init_model(const ModelSpec& spec, Rng& rng);

// One sampled training task. Feature maps stay float32; loss code casts as
// needed for the active precision.
struct Episode {
  std::vector<Tensor<float>> feature_maps;         // per sample, {C,H,W}
  std::vector<std::vector<int>> image_attributes;  // per sample, binary targets
  std::vector<int> labels;                         // episode-local 0..N-1
  Tensor<float> category_attributes;               // {N, Q}
  std::vector<int> identity_rows;                  // global fc rows (i2i)
  std::vector<std::string> identity_ids;           // N ids, episode order
};

template <typename T>
struct LossTerms {
  Tensor<T> total, cea, dcm;  // scalars, live on the tape
};

// Full training objective for one episode: mean over samples of the
// attribute cross entropy plus the angular-margin consistency term.
template <typename T>
LossTerms<T> episode_loss(const Model<T>& model, const Episode& episode,
                          const LossWeights& weights, Tape<T>& tape);

// --- checkpoints -----------------------------------------------------------
// A checkpoint directory holds checkpoint.json (metadata and a tensor index)
// plus one binary tensor container per parameter and optimizer moment.

struct Checkpoint {
  Model<float> model;
  std::map<std::string, Tensor<float>> optimizer;  // "<param>.m" / "<param>.v"
  int step = 0;
  uint64_t train_seed = 0;
  std::string rng_state;  // serialized trainer rng, empty before training
  std::string config_hash;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace mfhi
