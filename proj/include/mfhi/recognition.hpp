#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mfhi/dataset.hpp"
#include "mfhi/model.hpp"
#include "mfhi/plm.hpp"

namespace mfhi {

// Candidate ordering for one query, best first. `order` is a permutation of
// candidate indices; ties always resolve toward the lower candidate index.
// `scores` is similarity for cosine protocols and distance for I2I.
struct RankedResult {
  std::string query_id;
  std::vector<int> order;
  std::vector<double> scores;
};

// Nearest prototype by cosine similarity; the full ranking feeds Top-P.
RankedResult classify_i2a(const Tensor<float>& v, const PrototypeSet& prototypes);

// Attribute query -> prototype through the PLM -> gallery ranked by
// descending cosine similarity.
RankedResult retrieve_a2i(const std::vector<double>& category_attr,
                          const MlpParams<float>& mlp, const Tensor<float>& gallery);

// Both sides l2-normalized, ranked by ascending Euclidean distance.
RankedResult retrieve_i2i(const Tensor<float>& query, const Tensor<float>& gallery);

// Mean over classes of per-class Top-P accuracy, so sparse classes weigh the
// same as dense ones.
std::map<int, double> metric_topP_per_class(const std::vector<RankedResult>& rankings,
                                            const std::vector<int>& truths,
                                            const std::vector<int>& p_values,
                                            int class_count);

// Fraction of queries with a relevant candidate in the top P. Queries with
// empty relevant sets leave the denominator; all-empty yields nullopt.
std::optional<std::map<int, double>> metric_cmc(const std::vector<RankedResult>& rankings,
                                                const std::vector<std::vector<int>>& relevant,
                                                const std::vector<int>& p_values);

// Mean average precision over queries with non-empty relevant sets.
std::optional<double> metric_map(const std::vector<RankedResult>& rankings,
                                 const std::vector<std::vector<int>>& relevant);

struct EvalConfig {
  std::vector<int> p_values = {1, 5, 10};
  bool exclude_self_match = true;  // I2I: drop the exact query image from the gallery
};

struct MetricsReport {
  std::string protocol;  // "i2a" | "a2i" | "i2i"
  std::vector<std::pair<std::string, double>> values;
  int query_count = 0;
  int gallery_count = 0;
  int identity_count = 0;
  uint64_t seed = 0;
  std::string config_hash;

  std::optional<double> value(const std::string& name) const;
};

// Runs one protocol over the test split of a dataset. Face-style relevance
// uses true identities; reid-style I2A/A2I use semantic ids.
MetricsReport evaluate(const std::string& protocol, const Model<float>& model,
                       const Dataset& dataset, const EvalConfig& cfg, uint64_t seed,
                       const std::string& config_hash);

std::string report_text_table(const MetricsReport& report);
std::string report_json(const MetricsReport& report);
// Writes report_<protocol>_seed<seed>_<hash>.{txt,json}; returns the json path.
std::filesystem::path save_report(const std::filesystem::path& dir, const MetricsReport& report);

}  // namespace mfhi
