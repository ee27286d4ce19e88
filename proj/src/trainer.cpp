#include "mfhi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace mfhi {

namespace fs = std::filesystem;

int TrainConfig::resolved_top_d(Flavor flavor, int attributes) const {
  if (top_d > 0) return std::min(top_d, attributes);
  const int flavor_default = flavor == Flavor::face_style ? 10 : 8;
  return std::min(flavor_default, attributes);
}

int TrainConfig::resolved_hidden(int channels) const {
  if (hidden > 0) return hidden;
  return std::max(2, channels / 2);
}

void TrainConfig::validate(int seen_identities, int attributes) const {
  if (episodes < 0) throw ConfigError("train: episodes must be non-negative");
  if (identities_per_episode < 2)
    throw ConfigError("train: identities_per_episode must be at least 2");
  if (identities_per_episode > seen_identities)
    throw ConfigError("train: identities_per_episode " + std::to_string(identities_per_episode) +
                      " exceeds the " + std::to_string(seen_identities) + " seen identities");
  if (shots < 1) throw ConfigError("train: shots must be at least 1");
  DcmConfig probe{r, d, stability};
  probe.validate();
  if (top_d < 0 || (top_d > 0 && top_d > attributes))
    throw ConfigError("train: top_d must lie in [1, " + std::to_string(attributes) + "]");
  if (learning_rate < 0 || weight_decay < 0)
    throw ConfigError("train: learning_rate and weight_decay must be non-negative");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw ConfigError("train: moment coefficients must lie in [0,1)");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be non-negative");
}

TrainSet TrainSet::from_dataset(const Dataset& dataset) {
  TrainSet ts;
  const auto& manifest = dataset.manifest();
  ts.channels = manifest.feature_shape[0];
  ts.height = manifest.feature_shape[1];
  ts.width = manifest.feature_shape[2];
  ts.attributes = manifest.attribute_count();
  ts.flavor = manifest.flavor;
  int row = 0;
  for (const auto* identity : dataset.train_identities()) {
    Identity entry;
    entry.id = identity->id;
    entry.fc_row = row++;
    for (const auto& image : identity->images)
      entry.images.push_back({dataset.load_feature(image), image.attributes});
    ts.identities.push_back(std::move(entry));
  }
  if (ts.identities.empty()) throw ConfigError("train: dataset has no training identities");
  return ts;
}

std::vector<std::string> TrainSet::identity_ids() const {
  std::vector<std::string> ids;
  for (const auto& identity : identities) ids.push_back(identity.id);
  return ids;
}

Episode sample_episode(const TrainSet& trainset, const TrainConfig& cfg, Rng& rng) {
  const int seen = static_cast<int>(trainset.identities.size());
  cfg.validate(seen, trainset.attributes);
  const int n = cfg.identities_per_episode;
  const int q = trainset.attributes;

  Episode episode;
  episode.category_attributes = Tensor<float>({n, q});
  const std::vector<int> chosen = rng.sample_without_replacement(seen, n);
  for (int label = 0; label < n; ++label) {
    const auto& identity = trainset.identities[chosen[label]];
    episode.identity_ids.push_back(identity.id);
    episode.identity_rows.push_back(identity.fc_row);

    const int count = static_cast<int>(identity.images.size());
    std::vector<int> picks;
    if (count >= cfg.shots) {
      picks = rng.sample_without_replacement(count, cfg.shots);
    } else {
      for (int s = 0; s < cfg.shots; ++s)
        picks.push_back(static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(count))));
    }
    for (int pick : picks) {
      const auto& image = identity.images[pick];
      episode.feature_maps.push_back(image.feature);
      episode.image_attributes.push_back(image.attributes);
      episode.labels.push_back(label);
      for (int a = 0; a < q; ++a)
        episode.category_attributes[label * q + a] += static_cast<float>(image.attributes[a]);
    }
  }
  const float inv_shots = 1.0f / static_cast<float>(cfg.shots);
  for (float& v : episode.category_attributes.value()) v *= inv_shots;
  return episode;
}

std::map<std::string, Tensor<float>> OptimizerState::named_tensors() const {
  std::map<std::string, Tensor<float>> out;
  for (const auto& [name, t] : first) out[name + ".adam_m"] = t;
  for (const auto& [name, t] : second) out[name + ".adam_v"] = t;
  return out;
}

OptimizerState OptimizerState::from_named(const std::map<std::string, Tensor<float>>& tensors,
                                          int step) {
  OptimizerState state;
  state.step = step;
  for (const auto& [name, t] : tensors) {
    const std::string m_suffix = ".adam_m", v_suffix = ".adam_v";
    if (name.size() > m_suffix.size() &&
        name.compare(name.size() - m_suffix.size(), m_suffix.size(), m_suffix) == 0)
      state.first[name.substr(0, name.size() - m_suffix.size())] = t;
    else if (name.size() > v_suffix.size() &&
             name.compare(name.size() - v_suffix.size(), v_suffix.size(), v_suffix) == 0)
      state.second[name.substr(0, name.size() - v_suffix.size())] = t;
    else
      throw FormatError("optimizer state: unexpected tensor \"" + name + "\"");
  }
  return state;
}

StepResult train_step(const Episode& episode, Model<float>& model, OptimizerState& opt,
                      const TrainConfig& cfg) {
  model.zero_grads();
  Tape<float> tape;
  LossWeights weights{cfg.cea_coef, cfg.dcm_coef};
  LossTerms<float> terms = episode_loss(model, episode, weights, tape);

  StepResult result{terms.cea[0], terms.dcm[0], terms.total[0]};
  if (!std::isfinite(result.total)) {
    const char* term = !std::isfinite(result.cea) ? "CEA" : "DCM";
    throw NumericError("train_step: non-finite " + std::string(term) + " loss at step " +
                       std::to_string(opt.step + 1));
  }
  tape.backward(terms.total);

  opt.step += 1;
  const float lr = static_cast<float>(cfg.learning_rate);
  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float eps = static_cast<float>(cfg.adam_eps);
  const float decay = static_cast<float>(cfg.weight_decay);
  const float correction1 = 1.0f - std::pow(b1, static_cast<float>(opt.step));
  const float correction2 = 1.0f - std::pow(b2, static_cast<float>(opt.step));

  for (auto& p : model.named_params()) {
    auto [m_it, m_new] = opt.first.emplace(p.name, Tensor<float>(p.tensor.shape()));
    auto [v_it, v_new] = opt.second.emplace(p.name, Tensor<float>(p.tensor.shape()));
    Tensor<float>& m = m_it->second;
    Tensor<float>& v = v_it->second;
    const auto& g = p.tensor.grad();
    float* pm = m.data();
    float* pv = v.data();
    float* pw = p.tensor.data();
    const bool decay_this = decay > 0 && (cfg.decay_biases || !p.is_bias);
    for (int i = 0; i < p.tensor.size(); ++i) {
      pm[i] = b1 * pm[i] + (1.0f - b1) * g[i];
      pv[i] = b2 * pv[i] + (1.0f - b2) * g[i] * g[i];
      const float m_hat = pm[i] / correction1;
      const float v_hat = pv[i] / correction2;
      pw[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      if (decay_this) pw[i] -= lr * decay * pw[i];
    }
  }
  return result;
}

FitResult fit(const Dataset& dataset, const TrainConfig& cfg, const fs::path& out_dir,
              const std::string& config_hash, const fs::path& resume_from) {
  TrainSet trainset = TrainSet::from_dataset(dataset);
  cfg.validate(static_cast<int>(trainset.identities.size()), trainset.attributes);
  fs::create_directories(out_dir);

  Model<float> model;
  OptimizerState opt;
  Rng episode_rng(0);
  int start_episode = 0;

  if (!resume_from.empty()) {
    Checkpoint checkpoint = load_checkpoint(resume_from);
    if (checkpoint.model.channels != trainset.channels ||
        checkpoint.model.attributes != trainset.attributes)
      throw ConfigError("fit: checkpoint geometry does not match the dataset");
    model = checkpoint.model;
    opt = OptimizerState::from_named(checkpoint.optimizer, checkpoint.step);
    episode_rng = Rng::deserialize(checkpoint.rng_state);
    start_episode = checkpoint.step;
  } else {
    ModelSpec spec;
    spec.mode = cfg.mode;
    spec.channels = trainset.channels;
    spec.height = trainset.height;
    spec.width = trainset.width;
    spec.attributes = trainset.attributes;
    spec.top_d = cfg.resolved_top_d(trainset.flavor, trainset.attributes);
    spec.hidden = cfg.resolved_hidden(trainset.channels);
    spec.normalize_attention = cfg.normalize_attention;
    spec.use_attention = cfg.use_attention;
    spec.dcm = DcmConfig{cfg.r, cfg.d, cfg.stability};
    if (cfg.mode == TrainMode::i2i) spec.fc_identity_ids = trainset.identity_ids();
    Rng base(cfg.seed);
    Rng init_rng = base.fork(0x696e6974);  // "init"
    model = init_model<float>(spec, init_rng);
    episode_rng = base.fork(0x65700000);  // episode stream
  }

  auto write_checkpoint = [&](const fs::path& dir) {
    Checkpoint checkpoint;
    checkpoint.model = model;
    checkpoint.optimizer = opt.named_tensors();
    checkpoint.step = opt.step;
    checkpoint.train_seed = cfg.seed;
    checkpoint.rng_state = episode_rng.serialize();
    checkpoint.config_hash = config_hash;
    save_checkpoint(dir, checkpoint);
  };

  std::ofstream log(out_dir / "train_log.tsv", std::ios::trunc);
  if (!log) throw IoError("fit: cannot open " + (out_dir / "train_log.tsv").string());
  log << "episode\tcea\tdcm\ttotal\n";
  std::ofstream timing(out_dir / "timing.tsv", std::ios::trunc);
  timing << "episode\twall_ms\n";

  FitResult result;
  char line[128];
  for (int episode_index = start_episode + 1; episode_index <= cfg.episodes; ++episode_index) {
    const auto t0 = std::chrono::steady_clock::now();
    Episode episode = sample_episode(trainset, cfg, episode_rng);
    StepResult step = train_step(episode, model, opt, cfg);
    const auto t1 = std::chrono::steady_clock::now();

    std::snprintf(line, sizeof(line), "%d\t%.6f\t%.6f\t%.6f\n", episode_index, step.cea,
                  step.dcm, step.total);
    log << line;
    timing << episode_index << "\t"
           << std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() << "\n";

    if (result.episodes_run == 0) result.first_total = step.total;
    result.last_total = step.total;
    result.episodes_run += 1;

    if (cfg.checkpoint_every > 0 && episode_index % cfg.checkpoint_every == 0 &&
        episode_index < cfg.episodes)
      write_checkpoint(out_dir / ("checkpoint_ep" + std::to_string(episode_index)));
  }

  result.final_checkpoint = out_dir / "checkpoint_final";
  write_checkpoint(result.final_checkpoint);
  log.flush();
  if (!log) throw IoError("fit: writing the training log failed");
  return result;
}

}  // namespace mfhi
