#include "mfhi/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mfhi/dataset.hpp"

namespace mfhi {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(TrainMode mode) { return mode == TrainMode::i2a ? "i2a" : "i2i"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "i2a") return TrainMode::i2a;
  if (s == "i2i") return TrainMode::i2i;
  throw ConfigError("unknown training mode \"" + s + "\" (expected i2a or i2i)");
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::named_params() {
  std::vector<ParamRef<T>> params;
  params.push_back({"apm.weights", apm.weights, false});
  params.push_back({"apm.bias", apm.bias, true});
  if (mode == TrainMode::i2a) {
    params.push_back({"mlp.w1", mlp.w1, false});
    params.push_back({"mlp.b1", mlp.b1, true});
    params.push_back({"mlp.w2", mlp.w2, false});
    params.push_back({"mlp.b2", mlp.b2, true});
  } else {
    params.push_back({"fc.weights", fc_weights, false});
  }
  return params;
}

template <typename T>
void Model<T>::zero_grads() {
  for (auto& p : named_params()) p.tensor.zero_grad();
}

template <typename T>
Tensor<T> Model<T>::image_feature(const Tensor<T>& feature_map, Tape<T>* tape) const {
  if (!use_attention) return gap(feature_map, tape);
  return visual_feature(feature_map, apm, top_d, normalize_attention, tape).feature;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.mode = mode;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.attributes = attributes;
  out.top_d = top_d;
  out.hidden = hidden;
  out.normalize_attention = normalize_attention;
  out.use_attention = use_attention;
  out.dcm = dcm;
  out.apm.weights = apm.weights.template cast<U>();
  out.apm.bias = apm.bias.template cast<U>();
  if (mode == TrainMode::i2a) {
    out.mlp.w1 = mlp.w1.template cast<U>();
    out.mlp.b1 = mlp.b1.template cast<U>();
    out.mlp.w2 = mlp.w2.template cast<U>();
    out.mlp.b2 = mlp.b2.template cast<U>();
  } else {
    out.fc_weights = fc_weights.template cast<U>();
    out.fc_identity_ids = fc_identity_ids;
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

template <typename T>
Model<T> init_model(const ModelSpec& spec, Rng& rng) {
  if (spec.channels < 1 || spec.height < 1 || spec.width < 1 || spec.attributes < 1)
    throw ConfigError("init_model: geometry extents must be positive");
  if (spec.top_d < 1 || spec.top_d > spec.attributes)
    throw ConfigError("init_model: top_d must lie in [1, attributes]");
  spec.dcm.validate();
  Model<T> model;
  model.mode = spec.mode;
  model.channels = spec.channels;
  model.height = spec.height;
  model.width = spec.width;
  model.attributes = spec.attributes;
  model.top_d = spec.top_d;
  model.hidden = spec.hidden;
  model.normalize_attention = spec.normalize_attention;
  model.use_attention = spec.use_attention;
  model.dcm = spec.dcm;
  model.apm.weights = uniform_init<T>({spec.attributes, spec.channels}, spec.channels, rng);
  model.apm.bias = uniform_init<T>({spec.attributes}, spec.channels, rng);
  if (spec.mode == TrainMode::i2a) {
    if (spec.hidden < 1) throw ConfigError("init_model: hidden size must be positive");
    model.mlp.w1 = uniform_init<T>({spec.attributes, spec.hidden}, spec.attributes, rng);
    model.mlp.b1 = uniform_init<T>({spec.hidden}, spec.attributes, rng);
    model.mlp.w2 = uniform_init<T>({spec.hidden, spec.channels}, spec.hidden, rng);
    model.mlp.b2 = uniform_init<T>({spec.channels}, spec.hidden, rng);
  } else {
    if (spec.fc_identity_ids.empty())
      throw ConfigError("init_model: i2i mode needs the seen-identity list");
    model.fc_weights = uniform_init<T>(
        {static_cast<int>(spec.fc_identity_ids.size()), spec.channels}, spec.channels, rng);
    model.fc_identity_ids = spec.fc_identity_ids;
  }
  for (auto& p : model.named_params()) p.tensor.set_requires_grad(true);
  return model;
}

template <typename T>
LossTerms<T> episode_loss(const Model<T>& model, const Episode& episode,
                          const LossWeights& weights, Tape<T>& tape) {
  const size_t samples = episode.feature_maps.size();
  if (samples == 0) throw ArgumentError("episode_loss: empty episode");
  if (episode.labels.size() != samples || episode.image_attributes.size() != samples)
    throw DimensionError("episode_loss: episode fields disagree on the sample count");

  // Episode prototypes, rebuilt from the live parameters every call.
  Tensor<T> prototypes;
  if (model.mode == TrainMode::i2a) {
    Tensor<T> category = episode.category_attributes.template cast<T>();
    prototypes = prototypes_batch(category, model.mlp, &tape);
  } else {
    prototypes = take_rows(model.fc_weights, episode.identity_rows, &tape);
  }
  Tensor<T> prototypes_hat = l2_normalize_rows(prototypes, &tape);
  const int n = prototypes_hat.shape()[0];
  const int c = prototypes_hat.shape()[1];

  Tensor<T> cea_sum, dcm_sum;
  for (size_t i = 0; i < samples; ++i) {
    Tensor<T> feature_map = episode.feature_maps[i].template cast<T>();
    Tensor<T> scores, v;
    if (model.use_attention) {
      AttentionOutput<T> att = visual_feature(feature_map, model.apm, model.top_d,
                                              model.normalize_attention, &tape);
      scores = att.scores;
      v = att.feature;
    } else {
      scores = apm_scores(feature_map, model.apm, &tape);
      v = gap(feature_map, &tape);
    }

    Tensor<T> cea_i = cea_loss(scores, episode.image_attributes[i], &tape);

    Tensor<T> v_hat = l2_normalize(v, &tape);
    Tensor<T> cosines = matmul(prototypes_hat, reshape(v_hat, {c, 1}, &tape), &tape);
    cosines = clamp(reshape(cosines, {n}, &tape), static_cast<T>(-1.0 + 1e-7),
                    static_cast<T>(1.0 - 1e-7), &tape);
    Tensor<T> logits = dcm_logits(cosines, episode.labels[i], model.dcm, &tape);
    Tensor<T> dcm_i = cross_entropy_logits(logits, episode.labels[i], &tape);

    cea_sum = i == 0 ? cea_i : elementwise(cea_sum, cea_i, EwOp::add, &tape);
    dcm_sum = i == 0 ? dcm_i : elementwise(dcm_sum, dcm_i, EwOp::add, &tape);
  }

  const T inv = T(1) / static_cast<T>(samples);
  LossTerms<T> terms;
  terms.cea = affine(cea_sum, inv, T(0), &tape);
  terms.dcm = affine(dcm_sum, inv, T(0), &tape);
  terms.total = elementwise(affine(terms.cea, static_cast<T>(weights.cea), T(0), &tape),
                            affine(terms.dcm, static_cast<T>(weights.dcm), T(0), &tape),
                            EwOp::add, &tape);
  return terms;
}

template struct Model<float>;
template struct Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> init_model(const ModelSpec&, Rng&);
template Model<double> init_model(const ModelSpec&, Rng&);
template LossTerms<float> episode_loss(const Model<float>&, const Episode&, const LossWeights&,
                                       Tape<float>&);
template LossTerms<double> episode_loss(const Model<double>&, const Episode&, const LossWeights&,
                                        Tape<double>&);

// --- checkpoint I/O -------------------------------------------------------------

namespace {

std::string stability_name(DcmStability s) {
  return s == DcmStability::arcface_fallback ? "arcface-fallback" : "strict";
}

DcmStability stability_from_name(const std::string& s) {
  if (s == "arcface-fallback") return DcmStability::arcface_fallback;
  if (s == "strict") return DcmStability::strict;
  throw FormatError("unknown stability mode \"" + s + "\"");
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& checkpoint) {
  fs::create_directories(dir / "tensors");
  Model<float>& model = const_cast<Model<float>&>(checkpoint.model);

  json index = json::array();
  auto dump = [&](const std::string& name, const Tensor<float>& t) {
    const std::string file = "tensors/" + name + ".mft";
    write_tensor(dir / file, t);
    index.push_back({{"name", name}, {"shape", t.shape()}, {"file", file}});
  };
  for (auto& p : model.named_params()) dump(p.name, p.tensor);
  for (const auto& [name, t] : checkpoint.optimizer) dump(name, t);

  json doc;
  doc["schema_version"] = 1;
  doc["mode"] = to_string(model.mode);
  doc["channels"] = model.channels;
  doc["height"] = model.height;
  doc["width"] = model.width;
  doc["attributes"] = model.attributes;
  doc["top_d"] = model.top_d;
  doc["hidden"] = model.hidden;
  doc["normalize_attention"] = model.normalize_attention;
  doc["use_attention"] = model.use_attention;
  doc["dcm"] = {{"r", model.dcm.r}, {"d", model.dcm.d},
                {"stability", stability_name(model.dcm.stability)}};
  if (model.mode == TrainMode::i2i) doc["fc_identities"] = model.fc_identity_ids;
  doc["step"] = checkpoint.step;
  doc["train_seed"] = checkpoint.train_seed;
  doc["rng_state"] = checkpoint.rng_state;
  doc["config_hash"] = checkpoint.config_hash;
  doc["tensors"] = std::move(index);

  std::ofstream out(dir / "checkpoint.json", std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + (dir / "checkpoint.json").string());
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("save_checkpoint: write failed in " + dir.string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw IoError("load_checkpoint: cannot open " + (dir / "checkpoint.json").string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("load_checkpoint: " + dir.string() + ": " + e.what());
  }

  Checkpoint checkpoint;
  try {
    Model<float>& model = checkpoint.model;
    model.mode = train_mode_from_string(doc.at("mode").get<std::string>());
    model.channels = doc.at("channels").get<int>();
    model.height = doc.at("height").get<int>();
    model.width = doc.at("width").get<int>();
    model.attributes = doc.at("attributes").get<int>();
    model.top_d = doc.at("top_d").get<int>();
    model.hidden = doc.at("hidden").get<int>();
    model.normalize_attention = doc.at("normalize_attention").get<bool>();
    model.use_attention = doc.at("use_attention").get<bool>();
    model.dcm.r = doc.at("dcm").at("r").get<double>();
    model.dcm.d = doc.at("dcm").at("d").get<double>();
    model.dcm.stability = stability_from_name(doc.at("dcm").at("stability").get<std::string>());
    if (model.mode == TrainMode::i2i)
      model.fc_identity_ids = doc.at("fc_identities").get<std::vector<std::string>>();
    checkpoint.step = doc.at("step").get<int>();
    checkpoint.train_seed = doc.at("train_seed").get<uint64_t>();
    checkpoint.rng_state = doc.at("rng_state").get<std::string>();
    checkpoint.config_hash = doc.at("config_hash").get<std::string>();

    std::map<std::string, Tensor<float>> tensors;
    for (const auto& entry : doc.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      tensors[name] = read_tensor(dir / entry.at("file").get<std::string>());
    }
    auto take = [&](const std::string& name) {
      auto it = tensors.find(name);
      if (it == tensors.end())
        throw FormatError("load_checkpoint: missing tensor \"" + name + "\"");
      Tensor<float> t = it->second;
      tensors.erase(it);
      return t;
    };
    model.apm.weights = take("apm.weights");
    model.apm.bias = take("apm.bias");
    if (model.mode == TrainMode::i2a) {
      model.mlp.w1 = take("mlp.w1");
      model.mlp.b1 = take("mlp.b1");
      model.mlp.w2 = take("mlp.w2");
      model.mlp.b2 = take("mlp.b2");
    } else {
      model.fc_weights = take("fc.weights");
    }
    checkpoint.optimizer = std::move(tensors);  // whatever remains is optimizer state
    for (auto& p : model.named_params()) p.tensor.set_requires_grad(true);
  } catch (const json::exception& e) {
    throw FormatError("load_checkpoint: " + dir.string() + ": " + e.what());
  }
  return checkpoint;
}

}  // namespace mfhi
