#include "mfhi/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

namespace mfhi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> normalized(const float* v, int n, const std::string& what) {
  double sq = 0;
  for (int i = 0; i < n; ++i) sq += static_cast<double>(v[i]) * v[i];
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) throw DegenerateInputError(what + " has near-zero norm");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = v[i] / norm;
  return out;
}

RankedResult rank(std::string query_id, std::vector<double> scores, bool descending) {
  RankedResult result;
  result.query_id = std::move(query_id);
  result.order.resize(scores.size());
  std::iota(result.order.begin(), result.order.end(), 0);
  std::sort(result.order.begin(), result.order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return descending ? scores[a] > scores[b] : scores[a] < scores[b];
    return a < b;
  });
  result.scores.reserve(scores.size());
  for (int idx : result.order) result.scores.push_back(scores[idx]);
  return result;
}

}  // namespace

RankedResult classify_i2a(const Tensor<float>& v, const PrototypeSet& prototypes) {
  const int n = prototypes.prototypes.shape()[0];
  const int c = prototypes.prototypes.shape()[1];
  if (v.size() != c)
    throw DimensionError("classify_i2a: feature dimension " + std::to_string(v.size()) +
                         " does not match prototypes of width " + std::to_string(c));
  const std::vector<double> q = normalized(v.data(), c, "classify_i2a: query");
  std::vector<double> scores(n);
  for (int j = 0; j < n; ++j) {
    const std::vector<double> m =
        normalized(prototypes.prototypes.data() + j * c, c,
                   "classify_i2a: prototype \"" + prototypes.ids[j] + "\"");
    double dot = 0;
    for (int i = 0; i < c; ++i) dot += q[i] * m[i];
    scores[j] = dot;
  }
  return rank("", std::move(scores), /*descending=*/true);
}

RankedResult retrieve_a2i(const std::vector<double>& category_attr,
                          const MlpParams<float>& mlp, const Tensor<float>& gallery) {
  if (gallery.rank() != 2 || gallery.shape()[0] < 1)
    throw ArgumentError("retrieve_a2i: gallery must be a non-empty {T,C} matrix");
  std::vector<float> attr(category_attr.begin(), category_attr.end());
  const int q = static_cast<int>(attr.size());
  Tensor<float> query_attr({q}, std::move(attr));
  Tensor<float> proto = prototype(query_attr, mlp, static_cast<Tape<float>*>(nullptr));
  const int t = gallery.shape()[0], c = gallery.shape()[1];
  if (proto.size() != c)
    throw DimensionError("retrieve_a2i: prototype width does not match the gallery");
  const std::vector<double> m = normalized(proto.data(), c, "retrieve_a2i: prototype");
  std::vector<double> scores(t);
  for (int i = 0; i < t; ++i) {
    const std::vector<double> g =
        normalized(gallery.data() + i * c, c, "retrieve_a2i: gallery row " + std::to_string(i));
    double dot = 0;
    for (int j = 0; j < c; ++j) dot += m[j] * g[j];
    scores[i] = dot;
  }
  return rank("", std::move(scores), /*descending=*/true);
}

RankedResult retrieve_i2i(const Tensor<float>& query, const Tensor<float>& gallery) {
  if (gallery.rank() != 2 || gallery.shape()[0] < 1)
    throw ArgumentError("retrieve_i2i: gallery must be a non-empty {P,C} matrix");
  const int p = gallery.shape()[0], c = gallery.shape()[1];
  if (query.size() != c)
    throw DimensionError("retrieve_i2i: query dimension does not match the gallery");
  const std::vector<double> q = normalized(query.data(), c, "retrieve_i2i: query");
  std::vector<double> distances(p);
  for (int i = 0; i < p; ++i) {
    const std::vector<double> g =
        normalized(gallery.data() + i * c, c, "retrieve_i2i: gallery row " + std::to_string(i));
    double sq = 0;
    for (int j = 0; j < c; ++j) {
      const double diff = q[j] - g[j];
      sq += diff * diff;
    }
    distances[i] = std::sqrt(sq);
  }
  return rank("", std::move(distances), /*descending=*/false);
}

std::map<int, double> metric_topP_per_class(const std::vector<RankedResult>& rankings,
                                            const std::vector<int>& truths,
                                            const std::vector<int>& p_values,
                                            int class_count) {
  if (rankings.size() != truths.size())
    throw DimensionError("metric_topP_per_class: ranking and truth counts disagree");
  for (int truth : truths)
    if (truth < 0 || truth >= class_count)
      throw ArgumentError("metric_topP_per_class: truth id " + std::to_string(truth) +
                          " is not among the prototypes");
  std::map<int, double> out;
  for (int p : p_values) {
    std::vector<int> correct(class_count, 0), total(class_count, 0);
    for (size_t qi = 0; qi < rankings.size(); ++qi) {
      const auto& order = rankings[qi].order;
      total[truths[qi]] += 1;
      const int window = std::min<int>(p, static_cast<int>(order.size()));
      for (int k = 0; k < window; ++k) {
        if (order[k] == truths[qi]) {
          correct[truths[qi]] += 1;
          break;
        }
      }
    }
    double acc = 0;
    int populated = 0;
    for (int cls = 0; cls < class_count; ++cls) {
      if (total[cls] == 0) continue;
      acc += static_cast<double>(correct[cls]) / total[cls];
      populated += 1;
    }
    if (populated == 0) throw ArgumentError("metric_topP_per_class: no queries given");
    out[p] = acc / populated;
  }
  return out;
}

std::optional<std::map<int, double>> metric_cmc(const std::vector<RankedResult>& rankings,
                                                const std::vector<std::vector<int>>& relevant,
                                                const std::vector<int>& p_values) {
  if (rankings.size() != relevant.size())
    throw DimensionError("metric_cmc: ranking and relevance counts disagree");
  int denominator = 0;
  for (const auto& rel : relevant)
    if (!rel.empty()) denominator += 1;
  if (denominator == 0) return std::nullopt;
  std::map<int, double> out;
  for (int p : p_values) {
    int hits = 0;
    for (size_t qi = 0; qi < rankings.size(); ++qi) {
      if (relevant[qi].empty()) continue;
      const std::set<int> rel(relevant[qi].begin(), relevant[qi].end());
      const auto& order = rankings[qi].order;
      const int window = std::min<int>(p, static_cast<int>(order.size()));
      for (int k = 0; k < window; ++k) {
        if (rel.count(order[k])) {
          hits += 1;
          break;
        }
      }
    }
    out[p] = static_cast<double>(hits) / denominator;
  }
  return out;
}

std::optional<double> metric_map(const std::vector<RankedResult>& rankings,
                                 const std::vector<std::vector<int>>& relevant) {
  if (rankings.size() != relevant.size())
    throw DimensionError("metric_map: ranking and relevance counts disagree");
  double total_ap = 0;
  int counted = 0;
  for (size_t qi = 0; qi < rankings.size(); ++qi) {
    if (relevant[qi].empty()) continue;
    const std::set<int> rel(relevant[qi].begin(), relevant[qi].end());
    const auto& order = rankings[qi].order;
    int hits = 0;
    double ap = 0;
    for (size_t k = 0; k < order.size(); ++k) {
      if (rel.count(order[k])) {
        hits += 1;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    }
    total_ap += ap / static_cast<double>(rel.size());
    counted += 1;
  }
  if (counted == 0) return std::nullopt;
  return total_ap / counted;
}

// --- protocol evaluation ---------------------------------------------------------

namespace {

struct TestView {
  // gallery image records and features in manifest order
  std::vector<const ImageRecord*> gallery_images;
  std::vector<const ImageRecord*> probe_images;
  std::vector<std::string> gallery_identity;  // identity id per gallery image
  std::vector<std::string> probe_identity;
  Tensor<float> gallery_features;  // {T, C}
  std::vector<Tensor<float>> probe_features;
};

Tensor<float> model_feature(const Model<float>& model, const Tensor<float>& feature_map) {
  return model.image_feature(feature_map, nullptr);
}

TestView collect_test_view(const Model<float>& model, const Dataset& dataset) {
  TestView view;
  std::vector<std::vector<float>> gallery_rows;
  for (const auto* identity : dataset.test_identities()) {
    for (const auto& image : identity->images) {
      if (image.split == Split::test_gallery) {
        view.gallery_images.push_back(&image);
        view.gallery_identity.push_back(identity->id);
        gallery_rows.push_back(
            model_feature(model, dataset.load_feature(image)).value());
      } else if (image.split == Split::test_probe) {
        view.probe_images.push_back(&image);
        view.probe_identity.push_back(identity->id);
        view.probe_features.push_back(model_feature(model, dataset.load_feature(image)));
      }
    }
  }
  if (!gallery_rows.empty()) {
    const int c = static_cast<int>(gallery_rows.front().size());
    view.gallery_features = Tensor<float>({static_cast<int>(gallery_rows.size()), c});
    for (size_t i = 0; i < gallery_rows.size(); ++i)
      std::copy(gallery_rows[i].begin(), gallery_rows[i].end(),
                view.gallery_features.data() + static_cast<int>(i) * c);
  }
  return view;
}

void check_compatible(const Model<float>& model, const DatasetManifest& manifest) {
  if (model.channels != manifest.feature_shape[0] || model.height != manifest.feature_shape[1] ||
      model.width != manifest.feature_shape[2] || model.attributes != manifest.attribute_count())
    throw ConfigError(
        "evaluate: checkpoint geometry (C=" + std::to_string(model.channels) + ",H=" +
        std::to_string(model.height) + ",W=" + std::to_string(model.width) + ",Q=" +
        std::to_string(model.attributes) + ") does not match dataset (C=" +
        std::to_string(manifest.feature_shape[0]) + ",H=" +
        std::to_string(manifest.feature_shape[1]) + ",W=" +
        std::to_string(manifest.feature_shape[2]) + ",Q=" +
        std::to_string(manifest.attribute_count()) + ")");
}

void check_disjoint(const Dataset& dataset) {
  std::set<std::string> train_ids, test_ids;
  for (const auto& identity : dataset.manifest().identities) {
    bool has_train = false, has_test = false;
    for (const auto& image : identity.images)
      (image.split == Split::train ? has_train : has_test) = true;
    if (has_train) train_ids.insert(identity.id);
    if (has_test) test_ids.insert(identity.id);
  }
  for (const auto& id : train_ids)
    if (test_ids.count(id))
      throw ProtocolError("evaluate: identity \"" + id + "\" appears in both splits");
}

void require_mlp(const Model<float>& model, const std::string& protocol) {
  if (model.mode != TrainMode::i2a)
    throw ConfigError("evaluate: protocol " + protocol +
                      " needs a prototype MLP; this checkpoint was trained in i2i mode");
}

// Per-class gallery attribute means keyed by class label, plus the class
// order. Face-style classes are identities; reid-style classes are semantic
// ids over all test images, with the class vector taken from any member.
struct ClassTable {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> attributes;
  std::map<std::string, int> index;
};

ClassTable face_classes(const Dataset& dataset) {
  ClassTable table;
  for (const auto* identity : dataset.test_identities()) {
    std::vector<std::vector<int>> gallery_attrs;
    for (const auto& image : identity->images)
      if (image.split == Split::test_gallery) gallery_attrs.push_back(image.attributes);
    if (gallery_attrs.empty()) continue;  // nothing to build a prototype from
    table.index[identity->id] = static_cast<int>(table.labels.size());
    table.labels.push_back(identity->id);
    table.attributes.push_back(category_attribute(gallery_attrs));
  }
  return table;
}

ClassTable semantic_classes(const Dataset& dataset) {
  ClassTable table;
  std::map<int, std::vector<int>> vectors;
  for (const auto* identity : dataset.test_identities())
    for (const auto& image : identity->images) {
      if (image.semantic_id < 0)
        throw ProtocolError("evaluate: reid-style dataset lacks semantic ids");
      vectors.emplace(image.semantic_id, image.attributes);
    }
  for (const auto& [sid, attrs] : vectors) {
    const std::string label = "sid_" + std::to_string(sid);
    table.index[label] = static_cast<int>(table.labels.size());
    table.labels.push_back(label);
    table.attributes.push_back(std::vector<double>(attrs.begin(), attrs.end()));
  }
  return table;
}

std::string class_of_image(const DatasetManifest& manifest, const ImageRecord& image,
                           const std::string& identity_id) {
  if (manifest.flavor == Flavor::reid_style) return "sid_" + std::to_string(image.semantic_id);
  return identity_id;
}

}  // namespace

std::optional<double> MetricsReport::value(const std::string& name) const {
  for (const auto& [key, v] : values)
    if (key == name) return v;
  return std::nullopt;
}

MetricsReport evaluate(const std::string& protocol, const Model<float>& model,
                       const Dataset& dataset, const EvalConfig& cfg, uint64_t seed,
                       const std::string& config_hash) {
  if (protocol != "i2a" && protocol != "a2i" && protocol != "i2i")
    throw ArgumentError("evaluate: unknown protocol \"" + protocol + "\"");
  check_compatible(model, dataset.manifest());
  check_disjoint(dataset);

  const auto& manifest = dataset.manifest();
  MetricsReport report;
  report.protocol = protocol;
  report.seed = seed;
  report.config_hash = config_hash;

  TestView view = collect_test_view(model, dataset);
  const bool semantic = manifest.flavor == Flavor::reid_style;

  if (protocol == "i2a") {
    require_mlp(model, protocol);
    ClassTable classes = semantic ? semantic_classes(dataset) : face_classes(dataset);
    const int class_count = static_cast<int>(classes.labels.size());
    if (class_count == 0) throw ArgumentError("evaluate: no prototype classes in the test split");

    PrototypeSet prototypes;
    prototypes.ids = classes.labels;
    prototypes.prototypes = Tensor<float>({class_count, model.channels});
    for (int j = 0; j < class_count; ++j) {
      std::vector<float> attr(classes.attributes[j].begin(), classes.attributes[j].end());
      Tensor<float> proto = prototype(Tensor<float>({model.attributes}, std::move(attr)),
                                      model.mlp, static_cast<Tape<float>*>(nullptr));
      std::copy(proto.data(), proto.data() + model.channels,
                prototypes.prototypes.data() + j * model.channels);
    }

    std::vector<RankedResult> rankings;
    std::vector<int> truths;
    for (size_t qi = 0; qi < view.probe_images.size(); ++qi) {
      const std::string cls =
          class_of_image(manifest, *view.probe_images[qi], view.probe_identity[qi]);
      auto it = classes.index.find(cls);
      if (it == classes.index.end())
        throw ArgumentError("evaluate: query class \"" + cls + "\" has no prototype");
      RankedResult r = classify_i2a(view.probe_features[qi], prototypes);
      r.query_id = view.probe_images[qi]->id;
      rankings.push_back(std::move(r));
      truths.push_back(it->second);
    }
    auto accs = metric_topP_per_class(rankings, truths, cfg.p_values, class_count);
    for (const auto& [p, acc] : accs)
      report.values.emplace_back("top" + std::to_string(p), acc);
    report.query_count = static_cast<int>(rankings.size());
    report.gallery_count = class_count;
    report.identity_count = class_count;
  } else if (protocol == "a2i") {
    require_mlp(model, protocol);
    ClassTable classes = semantic ? semantic_classes(dataset) : face_classes(dataset);
    if (classes.labels.empty())
      throw ArgumentError("evaluate: no attribute queries in the test split");
    if (view.gallery_images.empty())
      throw ArgumentError("evaluate: empty test gallery");

    std::vector<RankedResult> rankings;
    std::vector<std::vector<int>> relevant;
    for (size_t j = 0; j < classes.labels.size(); ++j) {
      RankedResult r = retrieve_a2i(classes.attributes[j], model.mlp, view.gallery_features);
      r.query_id = classes.labels[j];
      rankings.push_back(std::move(r));
      std::vector<int> rel;
      for (size_t gi = 0; gi < view.gallery_images.size(); ++gi) {
        const std::string cls =
            class_of_image(manifest, *view.gallery_images[gi], view.gallery_identity[gi]);
        if (cls == classes.labels[j]) rel.push_back(static_cast<int>(gi));
      }
      relevant.push_back(std::move(rel));
    }
    auto cmc = metric_cmc(rankings, relevant, cfg.p_values);
    if (cmc)
      for (const auto& [p, r] : *cmc)
        report.values.emplace_back("r@" + std::to_string(p), r);
    auto map_value = metric_map(rankings, relevant);
    if (map_value) report.values.emplace_back("map", *map_value);
    report.query_count = static_cast<int>(rankings.size());
    report.gallery_count = static_cast<int>(view.gallery_images.size());
    report.identity_count = static_cast<int>(classes.labels.size());
  } else {  // i2i
    if (view.gallery_images.empty()) throw ArgumentError("evaluate: empty test gallery");
    std::vector<RankedResult> rankings;
    std::vector<std::vector<int>> relevant;
    for (size_t qi = 0; qi < view.probe_images.size(); ++qi) {
      // Candidate list may drop the query image itself.
      std::vector<int> candidates;
      for (size_t gi = 0; gi < view.gallery_images.size(); ++gi) {
        if (cfg.exclude_self_match && view.gallery_images[gi]->id == view.probe_images[qi]->id)
          continue;
        candidates.push_back(static_cast<int>(gi));
      }
      Tensor<float> gallery({static_cast<int>(candidates.size()), model.channels});
      for (size_t ci = 0; ci < candidates.size(); ++ci)
        std::copy(view.gallery_features.data() + candidates[ci] * model.channels,
                  view.gallery_features.data() + (candidates[ci] + 1) * model.channels,
                  gallery.data() + static_cast<int>(ci) * model.channels);
      RankedResult local = retrieve_i2i(view.probe_features[qi], gallery);
      RankedResult r;
      r.query_id = view.probe_images[qi]->id;
      r.scores = local.scores;
      for (int idx : local.order) r.order.push_back(candidates[idx]);
      rankings.push_back(std::move(r));

      std::vector<int> rel;
      for (int gi : candidates)
        if (view.gallery_identity[gi] == view.probe_identity[qi]) rel.push_back(gi);
      relevant.push_back(std::move(rel));
    }
    auto cmc = metric_cmc(rankings, relevant, cfg.p_values);
    if (cmc)
      for (const auto& [p, r] : *cmc)
        report.values.emplace_back("r@" + std::to_string(p), r);
    auto map_value = metric_map(rankings, relevant);
    if (map_value) report.values.emplace_back("map", *map_value);
    report.query_count = static_cast<int>(rankings.size());
    report.gallery_count = static_cast<int>(view.gallery_images.size());
    std::set<std::string> ids(view.gallery_identity.begin(), view.gallery_identity.end());
    report.identity_count = static_cast<int>(ids.size());
  }
  return report;
}

std::string report_text_table(const MetricsReport& report) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "protocol: %s\n", report.protocol.c_str());
  out += line;
  std::snprintf(line, sizeof(line), "queries: %d  gallery: %d  identities: %d\n",
                report.query_count, report.gallery_count, report.identity_count);
  out += line;
  std::snprintf(line, sizeof(line), "seed: %llu  config: %s\n",
                static_cast<unsigned long long>(report.seed), report.config_hash.c_str());
  out += line;
  for (const auto& [name, value] : report.values) {
    std::snprintf(line, sizeof(line), "%-8s %.6f\n", name.c_str(), value);
    out += line;
  }
  return out;
}

std::string report_json(const MetricsReport& report) {
  json doc;
  doc["protocol"] = report.protocol;
  json values;
  for (const auto& [name, value] : report.values) values[name] = value;
  doc["values"] = std::move(values);
  doc["counts"] = {{"queries", report.query_count},
                   {"gallery", report.gallery_count},
                   {"identities", report.identity_count}};
  doc["seed"] = report.seed;
  doc["config_hash"] = report.config_hash;
  return doc.dump(2) + "\n";
}

fs::path save_report(const fs::path& dir, const MetricsReport& report) {
  fs::create_directories(dir);
  const std::string stem = "report_" + report.protocol + "_seed" +
                           std::to_string(report.seed) + "_" + report.config_hash;
  {
    std::ofstream out(dir / (stem + ".txt"), std::ios::trunc);
    if (!out) throw IoError("save_report: cannot open " + (dir / (stem + ".txt")).string());
    out << report_text_table(report);
  }
  const fs::path json_path = dir / (stem + ".json");
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw IoError("save_report: cannot open " + json_path.string());
  out << report_json(report);
  if (!out) throw IoError("save_report: write failed for " + json_path.string());
  return json_path;
}

}  // namespace mfhi
