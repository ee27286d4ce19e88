#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mfhi/tensor.hpp"

namespace mfhi {

// --- binary tensor container ------------------------------------------------
// Layout, bit-exact: magic "MFT1"; uint32 LE rank (1..4); rank uint32 LE
// extents, each >= 1; row-major float32 LE payload. A 2x2 tensor is exactly
// 4 + 4 + 8 + 16 = 32 bytes.
void write_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_tensor(const std::filesystem::path& path);
// Stream forms, for containers embedded in other artifacts.
void write_tensor(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& in, const std::string& name);
// Reads only the header; used by manifest validation.
std::vector<int> read_tensor_shape(const std::filesystem::path& path);

enum class Split { train, test_gallery, test_probe };
enum class Flavor { face_style, reid_style };

std::string to_string(Split s);
Split split_from_string(const std::string& s);
std::string to_string(Flavor f);
Flavor flavor_from_string(const std::string& s);

struct ImageRecord {
  std::string id;
  std::string file;             // tensor path relative to the dataset root
  std::vector<int> attributes;  // binary, length Q
  Split split = Split::train;
  int semantic_id = -1;         // assigned for reid-style evaluation
};

struct IdentityRecord {
  std::string id;
  std::vector<ImageRecord> images;
};

struct DatasetManifest {
  int schema_version = 1;
  Flavor flavor = Flavor::face_style;
  std::vector<std::string> attribute_names;
  std::array<int, 3> feature_shape{0, 0, 0};  // C, H, W
  std::vector<IdentityRecord> identities;

  int attribute_count() const { return static_cast<int>(attribute_names.size()); }
  bool identity_is_train(const IdentityRecord& identity) const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Rejects split overlap, missing or misshapen tensor files, non-binary
// attributes, and duplicate ids.
void validate_manifest(const DatasetManifest& manifest, const std::filesystem::path& root);

// --- attribute preprocessing -------------------------------------------------

struct AttributeColumn {
  std::string name;
  bool categorical = false;
  int arity = 2;  // number of categories; ignored for binary columns
};

// Binary columns pass through; a categorical column of arity k expands to k
// indicator coordinates.
std::vector<int> one_hot_expand(const std::vector<int>& values,
                                const std::vector<AttributeColumn>& schema);
std::vector<std::string> one_hot_names(const std::vector<AttributeColumn>& schema);

// Groups images by identical attribute vectors; semantic ids are dense
// 0..S-1 in first-occurrence order. Returns S. reid-style only.
int assign_semantic_ids(DatasetManifest& manifest);

// --- zero-shot splits ---------------------------------------------------------

struct SplitSpec {
  std::optional<double> train_ratio;             // e.g. 0.8
  std::optional<std::pair<int, int>> counts;     // (train, test)
};

// Identity-level partition with a seeded shuffle. Never splits images of one
// identity across sides.
std::pair<std::vector<std::string>, std::vector<std::string>> split_identities(
    const std::vector<std::string>& ids, const SplitSpec& spec, uint64_t seed);

// --- planted synthetic data ----------------------------------------------------

struct SyntheticConfig {
  int train_identities = 40;
  int test_identities = 10;
  int attributes = 12;
  int channels = 16;
  int height = 8;
  int width = 8;
  int images_per_identity = 6;
  double flip_prob = 0.05;    // attribute annotation noise
  double noise_scale = 0.1;   // per-image feature noise
  uint64_t seed = 0;
  Flavor flavor = Flavor::face_style;
};

struct PlantedRect {
  int top = 0, left = 0, height = 0, width = 0;
  bool contains(int row, int col) const {
    return row >= top && row < top + height && col >= left && col < left + width;
  }
};

// Generator ground truth, written alongside the dataset so oracle tests can
// inspect what was planted.
struct PlantedInfo {
  std::vector<PlantedRect> rects;                              // per attribute
  std::vector<std::string> basis_files;                        // per attribute
  std::map<std::string, std::vector<int>> identity_attributes; // noise-free vectors
};

// Writes manifest.json, features/*.mft, planted.json and planted/basis_*.mft.
// Identical configs produce byte-identical directories.
void generate_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& out_dir);
PlantedInfo load_planted(const std::filesystem::path& dataset_dir);

// Manifest plus root directory, validated on load.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }

  Tensor<float> load_feature(const ImageRecord& image) const;
  const ImageRecord* find_image(const std::string& image_id) const;
  const IdentityRecord* identity_of(const std::string& image_id) const;

  std::vector<const IdentityRecord*> train_identities() const;
  std::vector<const IdentityRecord*> test_identities() const;

 private:
  DatasetManifest manifest_;
  std::filesystem::path root_;
};

}  // namespace mfhi
