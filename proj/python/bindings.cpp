// Python bindings for the main MFHI operations: tensor container I/O, the
// synthetic generator, training, evaluation, the attention pipeline, the
// angular-margin probabilities and the retrieval metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfhi/config.hpp"
#include "mfhi/dataset.hpp"
#include "mfhi/recognition.hpp"
#include "mfhi/trainer.hpp"

namespace py = pybind11;
using namespace mfhi;

namespace {

Tensor<float> tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& array) {
  std::vector<int> shape(array.ndim());
  for (py::ssize_t i = 0; i < array.ndim(); ++i) shape[i] = static_cast<int>(array.shape(i));
  std::vector<float> data(array.data(), array.data() + array.size());
  return Tensor<float>(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> array(shape);
  std::copy(t.data(), t.data() + t.size(), array.mutable_data());
  return array;
}

py::dict report_to_dict(const MetricsReport& report) {
  py::dict values;
  for (const auto& [name, value] : report.values) values[py::str(name)] = value;
  py::dict out;
  out["protocol"] = report.protocol;
  out["values"] = values;
  out["queries"] = report.query_count;
  out["gallery"] = report.gallery_count;
  out["identities"] = report.identity_count;
  out["seed"] = report.seed;
  out["config_hash"] = report.config_hash;
  return out;
}

DcmStability stability_from(const std::string& name) {
  if (name == "arcface-fallback") return DcmStability::arcface_fallback;
  if (name == "strict") return DcmStability::strict;
  throw ConfigError("unknown stability mode \"" + name + "\"");
}

std::vector<RankedResult> rankings_from(const std::vector<std::vector<int>>& orders) {
  std::vector<RankedResult> rankings;
  for (const auto& order : orders) {
    RankedResult r;
    r.order = order;
    r.scores.assign(order.size(), 0.0);
    rankings.push_back(std::move(r));
  }
  return rankings;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Modality-free human identification engine";

  py::register_exception<Error>(m, "MfhiError");

  m.def("read_tensor",
        [](const std::string& path) { return array_from_tensor(read_tensor(path)); },
        py::arg("path"), "Read a binary tensor container into a float32 array.");

  m.def("write_tensor",
        [](const std::string& path,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& array) {
          write_tensor(std::filesystem::path(path), tensor_from_array(array));
        },
        py::arg("path"), py::arg("array"), "Write a float32 array as a tensor container.");

  m.def(
      "generate_synthetic",
      [](const std::string& out_dir, int train_identities, int test_identities, int attributes,
         int channels, int height, int width, int images_per_identity, double flip_prob,
         double noise_scale, uint64_t seed, const std::string& flavor) {
        SyntheticConfig cfg;
        cfg.train_identities = train_identities;
        cfg.test_identities = test_identities;
        cfg.attributes = attributes;
        cfg.channels = channels;
        cfg.height = height;
        cfg.width = width;
        cfg.images_per_identity = images_per_identity;
        cfg.flip_prob = flip_prob;
        cfg.noise_scale = noise_scale;
        cfg.seed = seed;
        cfg.flavor = flavor_from_string(flavor);
        generate_synthetic(cfg, out_dir);
      },
      py::arg("out_dir"), py::arg("train_identities") = 40, py::arg("test_identities") = 10,
      py::arg("attributes") = 12, py::arg("channels") = 16, py::arg("height") = 8,
      py::arg("width") = 8, py::arg("images_per_identity") = 6, py::arg("flip_prob") = 0.05,
      py::arg("noise_scale") = 0.1, py::arg("seed") = 0, py::arg("flavor") = "face-style",
      "Generate a planted synthetic dataset on disk.");

  m.def(
      "train",
      [](const std::string& data_dir, const std::string& out_dir, const std::string& mode,
         int episodes, int identities_per_episode, int shots, double r, double d, int top_d,
         int hidden, bool normalize_attention, bool use_attention, double cea_coef,
         double dcm_coef, double learning_rate, double weight_decay, uint64_t seed,
         int checkpoint_every, const std::string& resume) {
        TrainConfig cfg;
        cfg.mode = train_mode_from_string(mode);
        cfg.episodes = episodes;
        cfg.identities_per_episode = identities_per_episode;
        cfg.shots = shots;
        cfg.r = r;
        cfg.d = d;
        cfg.top_d = top_d;
        cfg.hidden = hidden;
        cfg.normalize_attention = normalize_attention;
        cfg.use_attention = use_attention;
        cfg.cea_coef = cea_coef;
        cfg.dcm_coef = dcm_coef;
        cfg.learning_rate = learning_rate;
        cfg.weight_decay = weight_decay;
        cfg.seed = seed;
        cfg.checkpoint_every = checkpoint_every;

        std::map<std::string, std::string> resolved = {
            {"py.mode", mode},
            {"py.episodes", std::to_string(episodes)},
            {"py.seed", std::to_string(seed)},
        };
        const std::string hash = config_hash(resolved);
        Dataset dataset = Dataset::load(data_dir);
        FitResult result = fit(dataset, cfg, out_dir, hash,
                               resume.empty() ? std::filesystem::path{}
                                              : std::filesystem::path(resume));
        py::dict out;
        out["episodes"] = result.episodes_run;
        out["checkpoint"] = result.final_checkpoint.string();
        out["first_total"] = result.first_total;
        out["last_total"] = result.last_total;
        out["config_hash"] = hash;
        return out;
      },
      py::arg("data_dir"), py::arg("out_dir"), py::arg("mode") = "i2a",
      py::arg("episodes") = 2000, py::arg("identities_per_episode") = 16, py::arg("shots") = 4,
      py::arg("r") = 16.0, py::arg("d") = 0.2, py::arg("top_d") = 0, py::arg("hidden") = 0,
      py::arg("normalize_attention") = true, py::arg("use_attention") = true,
      py::arg("cea_coef") = 1.0, py::arg("dcm_coef") = 1.0, py::arg("learning_rate") = 5e-3,
      py::arg("weight_decay") = 5e-4, py::arg("seed") = 0, py::arg("checkpoint_every") = 0,
      py::arg("resume") = "", "Run episodic training and return a summary.");

  m.def(
      "evaluate",
      [](const std::string& checkpoint_dir, const std::string& data_dir,
         const std::string& protocol, const std::vector<int>& top) {
        Checkpoint checkpoint = load_checkpoint(checkpoint_dir);
        Dataset dataset = Dataset::load(data_dir);
        EvalConfig cfg;
        cfg.p_values = top;
        MetricsReport report = evaluate(protocol, checkpoint.model, dataset, cfg,
                                        checkpoint.train_seed, checkpoint.config_hash);
        return report_to_dict(report);
      },
      py::arg("checkpoint_dir"), py::arg("data_dir"), py::arg("protocol"),
      py::arg("top") = std::vector<int>{1, 5, 10},
      "Evaluate a checkpoint under one protocol and return the report.");

  m.def(
      "dcm_probability",
      [](const std::vector<double>& cosines, int target, double r, double d,
         const std::string& stability) {
        return dcm_probability(cosines, target, DcmConfig{r, d, stability_from(stability)});
      },
      py::arg("cosines"), py::arg("target"), py::arg("r"), py::arg("d") = 0.0,
      py::arg("stability") = "arcface-fallback",
      "Angular-margin softmax probabilities for one sample.");

  m.def(
      "visual_feature",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& feature_map,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& weights,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& bias, int top_d,
         bool normalize) {
        ApmParams<float> params{tensor_from_array(weights), tensor_from_array(bias)};
        AttentionOutput<float> out = visual_feature(
            tensor_from_array(feature_map), params, top_d, normalize,
            static_cast<Tape<float>*>(nullptr));
        py::dict result;
        result["scores"] = array_from_tensor(out.scores);
        result["selected"] = out.selected;
        result["attention"] = array_from_tensor(out.attention);
        result["feature"] = array_from_tensor(out.feature);
        return result;
      },
      py::arg("feature_map"), py::arg("weights"), py::arg("bias"), py::arg("top_d"),
      py::arg("normalize") = true,
      "Run the attention pipeline on one feature map and return all stages.");

  m.def("category_attribute",
        [](const std::vector<std::vector<double>>& image_attrs) {
          return category_attribute(image_attrs);
        },
        py::arg("image_attrs"), "Mean image-level attribute vector.");

  m.def(
      "metric_cmc",
      [](const std::vector<std::vector<int>>& orders,
         const std::vector<std::vector<int>>& relevant, const std::vector<int>& p_values) {
        auto cmc = metric_cmc(rankings_from(orders), relevant, p_values);
        py::dict out;
        if (cmc)
          for (const auto& [p, v] : *cmc) out[py::int_(p)] = v;
        return out;
      },
      py::arg("orders"), py::arg("relevant"), py::arg("p_values"),
      "CMC R@P; empty dict when no query has relevant items.");

  m.def(
      "metric_map",
      [](const std::vector<std::vector<int>>& orders,
         const std::vector<std::vector<int>>& relevant) -> py::object {
        auto value = metric_map(rankings_from(orders), relevant);
        if (!value) return py::none();
        return py::float_(*value);
      },
      py::arg("orders"), py::arg("relevant"), "Mean average precision, or None.");

  m.attr("__version__") = "0.1.0";
}
