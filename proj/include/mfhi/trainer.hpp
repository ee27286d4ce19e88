#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mfhi/dataset.hpp"
#include "mfhi/model.hpp"
#include "mfhi/rng.hpp"

namespace mfhi {

struct TrainConfig {
  TrainMode mode = TrainMode::i2a;
  int episodes = 2000;
  int identities_per_episode = 16;  // N
  int shots = 4;

  double r = 16.0;
  double d = 0.2;
  DcmStability stability = DcmStability::arcface_fallback;
  int top_d = 0;   // 0: flavor default (10 face-style, 8 reid-style), capped at Q
  int hidden = 0;  // 0: C/2

  bool normalize_attention = true;
  bool use_attention = true;
  double cea_coef = 1.0;
  double dcm_coef = 1.0;

  double learning_rate = 5e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool decay_biases = false;

  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: final checkpoint only

  int resolved_top_d(Flavor flavor, int attributes) const;
  int resolved_hidden(int channels) const;
  void validate(int seen_identities, int attributes) const;
};

// In-memory training view of a dataset: train-split images only, feature
// maps preloaded.
struct TrainSet {
  struct Image {
    Tensor<float> feature;
    std::vector<int> attributes;
  };
  struct Identity {
    std::string id;
    int fc_row = 0;
    std::vector<Image> images;
  };
  int channels = 0, height = 0, width = 0, attributes = 0;
  Flavor flavor = Flavor::face_style;
  std::vector<Identity> identities;

  static TrainSet from_dataset(const Dataset& dataset);
  std::vector<std::string> identity_ids() const;
};

// Draws N distinct identities uniformly, then `shots` images each (without
// replacement when possible). Labels are remapped to 0..N-1 and the
// episode's category-level vectors are the means over the sampled images.
Episode sample_episode(const TrainSet& trainset, const TrainConfig& cfg, Rng& rng);

// Adam moment accumulators, keyed by parameter name.
struct OptimizerState {
  std::map<std::string, Tensor<float>> first;
  std::map<std::string, Tensor<float>> second;
  int step = 0;

  std::map<std::string, Tensor<float>> named_tensors() const;
  static OptimizerState from_named(const std::map<std::string, Tensor<float>>& tensors, int step);
};

struct StepResult {
  float cea = 0, dcm = 0, total = 0;
};

// Forward, backward, decoupled-weight-decay Adam update with bias
// correction. Aborts with a diagnostic if any loss term is non-finite.
StepResult train_step(const Episode& episode, Model<float>& model, OptimizerState& opt,
                      const TrainConfig& cfg);

struct FitResult {
  std::filesystem::path final_checkpoint;
  int episodes_run = 0;
  float first_total = 0, last_total = 0;
};

// Episodic training loop. Writes checkpoint_final/ (plus checkpoint_ep*/ at
// the configured cadence), train_log.tsv (deterministic) and timing.tsv
// (wall-clock sidecar, excluded from determinism comparisons). Passing
// resume_from continues bitwise from a saved checkpoint.
FitResult fit(const Dataset& dataset, const TrainConfig& cfg,
              const std::filesystem::path& out_dir, const std::string& config_hash,
              const std::filesystem::path& resume_from = {});

}  // namespace mfhi
