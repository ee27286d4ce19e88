#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "mfhi/dataset.hpp"
#include "mfhi/rng.hpp"

using namespace mfhi;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("mfhi_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool directories_identical(const fs::path& a, const fs::path& b) {
  std::set<fs::path> rel_a, rel_b;
  for (const auto& entry : fs::recursive_directory_iterator(a))
    if (entry.is_regular_file()) rel_a.insert(fs::relative(entry.path(), a));
  for (const auto& entry : fs::recursive_directory_iterator(b))
    if (entry.is_regular_file()) rel_b.insert(fs::relative(entry.path(), b));
  if (rel_a != rel_b) return false;
  for (const auto& rel : rel_a)
    if (read_bytes(a / rel) != read_bytes(b / rel)) return false;
  return true;
}

}  // namespace

TEST_CASE("tensor container round-trips bitwise") {
  const fs::path dir = temp_dir("tensor_rt");
  Rng rng(4);
  Tensor<float> t({3, 2, 5});
  for (int i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-5, 5));
  write_tensor(dir / "t.mft", t);
  Tensor<float> back = read_tensor(dir / "t.mft");
  CHECK(back.shape() == t.shape());
  CHECK(back.value() == t.value());
}

TEST_CASE("a 2x2 tensor file is exactly 32 bytes") {
  const fs::path dir = temp_dir("tensor_sz");
  write_tensor(dir / "eye.mft", Tensor<float>({2, 2}, {1, 0, 0, 1}));
  CHECK(fs::file_size(dir / "eye.mft") == 32);
}

TEST_CASE("container rejects malformed files") {
  const fs::path dir = temp_dir("tensor_bad");

  SUBCASE("bad magic") {
    std::ofstream out(dir / "bad.mft", std::ios::binary);
    out << "NOPE" << std::string(12, '\0');
    out.close();
    CHECK_THROWS_AS(read_tensor(dir / "bad.mft"), FormatError);
  }
  SUBCASE("zero extent") {
    std::ofstream out(dir / "zero.mft", std::ios::binary);
    const unsigned char bytes[] = {'M', 'F', 'T', '1', 1, 0, 0, 0, 0, 0, 0, 0};
    out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    out.close();
    CHECK_THROWS_AS(read_tensor(dir / "zero.mft"), FormatError);
  }
  SUBCASE("truncated payload") {
    write_tensor(dir / "t.mft", Tensor<float>({2, 2}, {1, 2, 3, 4}));
    std::string bytes = read_bytes(dir / "t.mft");
    std::ofstream out(dir / "trunc.mft", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    out.close();
    CHECK_THROWS_AS(read_tensor(dir / "trunc.mft"), FormatError);
  }
  SUBCASE("trailing bytes") {
    write_tensor(dir / "t.mft", Tensor<float>({2, 2}, {1, 2, 3, 4}));
    std::ofstream out(dir / "t.mft", std::ios::binary | std::ios::app);
    out << "x";
    out.close();
    CHECK_THROWS_AS(read_tensor(dir / "t.mft"), FormatError);
  }
}

TEST_CASE("one_hot_expand") {
  SUBCASE("binary-only schema is the identity") {
    std::vector<AttributeColumn> schema = {{"a", false, 2}, {"b", false, 2}};
    CHECK(one_hot_expand({1, 0}, schema) == std::vector<int>{1, 0});
  }
  SUBCASE("3-ary column, value 2") {
    std::vector<AttributeColumn> schema = {{"c", true, 3}};
    CHECK(one_hot_expand({2}, schema) == std::vector<int>{0, 0, 1});
  }
  SUBCASE("mixed schema concatenates by column") {
    std::vector<AttributeColumn> schema = {{"bin", false, 2}, {"cat", true, 4}};
    CHECK(one_hot_expand({1, 0}, schema) == std::vector<int>{1, 1, 0, 0, 0});
    CHECK(one_hot_names(schema) ==
          std::vector<std::string>{"bin", "cat=0", "cat=1", "cat=2", "cat=3"});
  }
  SUBCASE("value outside arity is rejected") {
    std::vector<AttributeColumn> schema = {{"cat", true, 3}};
    CHECK_THROWS_AS(one_hot_expand({3}, schema), FormatError);
  }
}

namespace {

DatasetManifest tiny_manifest(Flavor flavor) {
  DatasetManifest m;
  m.flavor = flavor;
  m.attribute_names = {"a", "b"};
  m.feature_shape = {1, 1, 1};
  IdentityRecord p, q;
  p.id = "p";
  p.images = {{"p0", "features/p0.mft", {0, 1}, Split::train, -1},
              {"p1", "features/p1.mft", {0, 1}, Split::train, -1}};
  q.id = "q";
  q.images = {{"q0", "features/q0.mft", {1, 1}, Split::train, -1}};
  m.identities = {p, q};
  return m;
}

}  // namespace

TEST_CASE("assign_semantic_ids groups identical vectors") {
  SUBCASE("distinct vectors stay distinct") {
    DatasetManifest m = tiny_manifest(Flavor::reid_style);
    m.identities[0].images[1].attributes = {1, 0};
    const int s = assign_semantic_ids(m);
    CHECK(s == 3);
  }
  SUBCASE("identical vectors merge across identities") {
    DatasetManifest m = tiny_manifest(Flavor::reid_style);
    m.identities[1].images[0].attributes = {0, 1};
    const int s = assign_semantic_ids(m);
    CHECK(s == 1);
    CHECK(m.identities[0].images[0].semantic_id == 0);
    CHECK(m.identities[1].images[0].semantic_id == 0);
  }
  SUBCASE("partition matches pairwise vector equality") {
    Rng rng(17);
    DatasetManifest m;
    m.flavor = Flavor::reid_style;
    m.attribute_names = {"a", "b", "c"};
    m.feature_shape = {1, 1, 1};
    IdentityRecord identity;
    identity.id = "x";
    for (int i = 0; i < 40; ++i) {
      ImageRecord image;
      image.id = "im" + std::to_string(i);
      image.file = "f";
      for (int a = 0; a < 3; ++a) image.attributes.push_back(rng.uniform() < 0.5 ? 1 : 0);
      identity.images.push_back(image);
    }
    m.identities = {identity};
    assign_semantic_ids(m);
    const auto& images = m.identities[0].images;
    std::set<int> sids;
    for (size_t i = 0; i < images.size(); ++i) {
      sids.insert(images[i].semantic_id);
      for (size_t j = 0; j < images.size(); ++j) {
        const bool same_vec = images[i].attributes == images[j].attributes;
        const bool same_sid = images[i].semantic_id == images[j].semantic_id;
        CHECK(same_vec == same_sid);
      }
    }
    // ids are dense 0..S-1 and S equals the number of distinct vectors
    std::set<std::vector<int>> distinct;
    for (const auto& image : images) distinct.insert(image.attributes);
    CHECK(sids.size() == distinct.size());
    CHECK(*sids.begin() == 0);
    CHECK(*sids.rbegin() == static_cast<int>(sids.size()) - 1);
  }
  SUBCASE("face-style manifests are rejected") {
    DatasetManifest m = tiny_manifest(Flavor::face_style);
    CHECK_THROWS_AS(assign_semantic_ids(m), ArgumentError);
  }
}

TEST_CASE("split_identities") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("id" + std::to_string(i));

  SUBCASE("ratio 8:2 on 10 identities") {
    SplitSpec spec;
    spec.train_ratio = 0.8;
    auto [train, test] = split_identities(ids, spec, 0);
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);
  }
  SUBCASE("same seed reproduces the split") {
    SplitSpec spec;
    spec.train_ratio = 0.8;
    auto a = split_identities(ids, spec, 5);
    auto b = split_identities(ids, spec, 5);
    CHECK(a == b);
  }
  SUBCASE("train and test are disjoint across 100 seeds") {
    SplitSpec spec;
    spec.counts = {{6, 4}};
    for (uint64_t seed = 0; seed < 100; ++seed) {
      auto [train, test] = split_identities(ids, spec, seed);
      std::set<std::string> train_set(train.begin(), train.end());
      for (const auto& id : test) CHECK(train_set.count(id) == 0);
      CHECK(train.size() + test.size() == ids.size());
    }
  }
  SUBCASE("bad specs") {
    SplitSpec wrong_counts;
    wrong_counts.counts = {{6, 5}};
    CHECK_THROWS_AS(split_identities(ids, wrong_counts, 0), ConfigError);
    SplitSpec empty_side;
    empty_side.train_ratio = 1.0;
    CHECK_THROWS_AS(split_identities(ids, empty_side, 0), ConfigError);
    SplitSpec nothing;
    CHECK_THROWS_AS(split_identities(ids, nothing, 0), ConfigError);
  }
}

TEST_CASE("generator determinism and structure") {
  SyntheticConfig cfg;
  cfg.train_identities = 6;
  cfg.test_identities = 3;
  cfg.attributes = 6;
  cfg.channels = 4;
  cfg.height = 6;
  cfg.width = 6;
  cfg.images_per_identity = 4;
  cfg.seed = 11;

  SUBCASE("same config produces byte-identical directories") {
    const fs::path a = temp_dir("gen_a"), b = temp_dir("gen_b");
    generate_synthetic(cfg, a);
    generate_synthetic(cfg, b);
    CHECK(directories_identical(a, b));
  }

  SUBCASE("noiseless images of one identity are identical") {
    cfg.noise_scale = 0;
    cfg.flip_prob = 0;
    const fs::path dir = temp_dir("gen_noiseless");
    generate_synthetic(cfg, dir);
    Dataset ds = Dataset::load(dir);
    const auto& identity = ds.manifest().identities.front();
    const auto f0 = ds.load_feature(identity.images[0]);
    const auto f1 = ds.load_feature(identity.images[1]);
    CHECK(f0.value() == f1.value());
    CHECK(identity.images[0].attributes == identity.images[1].attributes);
  }

  SUBCASE("zero flip probability keeps annotations at the planted truth") {
    cfg.flip_prob = 0;
    const fs::path dir = temp_dir("gen_noflip");
    generate_synthetic(cfg, dir);
    Dataset ds = Dataset::load(dir);
    PlantedInfo planted = load_planted(dir);
    for (const auto& identity : ds.manifest().identities)
      for (const auto& image : identity.images)
        CHECK(image.attributes == planted.identity_attributes.at(identity.id));
  }

  SUBCASE("loaded dataset validates and splits identities disjointly") {
    const fs::path dir = temp_dir("gen_load");
    generate_synthetic(cfg, dir);
    Dataset ds = Dataset::load(dir);
    CHECK(ds.train_identities().size() == 6);
    CHECK(ds.test_identities().size() == 3);
  }
}

TEST_CASE("planted data is separable before any learning") {
  SyntheticConfig cfg;  // module defaults
  const fs::path dir = temp_dir("gen_sep");
  generate_synthetic(cfg, dir);
  Dataset ds = Dataset::load(dir);
  PlantedInfo planted = load_planted(dir);

  // Identity signature in gap space, from the generator's own bases.
  const int c = cfg.channels, hw = cfg.height * cfg.width;
  std::vector<std::vector<double>> basis_gap;
  for (const auto& file : planted.basis_files) {
    Tensor<float> basis = read_tensor(dir / file);
    std::vector<double> pooled(c, 0.0);
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < hw; ++i) pooled[ch] += basis[ch * hw + i];
      pooled[ch] /= hw;
    }
    basis_gap.push_back(std::move(pooled));
  }
  std::vector<std::string> ids;
  std::vector<std::vector<double>> signatures;
  for (const auto& [id, attrs] : planted.identity_attributes) {
    std::vector<double> signature(c, 0.0);
    for (int a = 0; a < cfg.attributes; ++a)
      if (attrs[a])
        for (int ch = 0; ch < c; ++ch) signature[ch] += basis_gap[a][ch];
    ids.push_back(id);
    signatures.push_back(std::move(signature));
  }

  int correct = 0, total = 0;
  for (const auto& identity : ds.manifest().identities) {
    for (const auto& image : identity.images) {
      Tensor<float> f = ds.load_feature(image);
      std::vector<double> pooled(c, 0.0);
      for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < hw; ++i) pooled[ch] += f[ch * hw + i];
        pooled[ch] /= hw;
      }
      int best = -1;
      double best_dist = 0;
      for (size_t j = 0; j < signatures.size(); ++j) {
        double dist = 0;
        for (int ch = 0; ch < c; ++ch) {
          const double diff = pooled[ch] - signatures[j][ch];
          dist += diff * diff;
        }
        if (best < 0 || dist < best_dist) {
          best = static_cast<int>(j);
          best_dist = dist;
        }
      }
      total += 1;
      if (ids[best] == identity.id) correct += 1;
    }
  }
  CHECK(static_cast<double>(correct) / total >= 0.95);
}

TEST_CASE("manifest validation rejects broken datasets") {
  SyntheticConfig cfg;
  cfg.train_identities = 3;
  cfg.test_identities = 2;
  cfg.attributes = 5;
  cfg.channels = 2;
  cfg.height = 3;
  cfg.width = 3;
  cfg.images_per_identity = 2;
  const fs::path dir = temp_dir("gen_invalid");
  generate_synthetic(cfg, dir);
  DatasetManifest manifest = load_manifest(dir / "manifest.json");

  SUBCASE("split overlap") {
    manifest.identities[0].images[0].split = Split::test_gallery;
    CHECK_THROWS_AS(validate_manifest(manifest, dir), ProtocolError);
  }
  SUBCASE("missing tensor file") {
    manifest.identities[0].images[0].file = "features/nope.mft";
    CHECK_THROWS_AS(validate_manifest(manifest, dir), FormatError);
  }
  SUBCASE("shape inconsistency") {
    manifest.feature_shape = {2, 3, 4};
    CHECK_THROWS_AS(validate_manifest(manifest, dir), FormatError);
  }
  SUBCASE("non-binary attribute") {
    manifest.identities[0].images[0].attributes[0] = 2;
    CHECK_THROWS_AS(validate_manifest(manifest, dir), FormatError);
  }
  SUBCASE("duplicate image id") {
    manifest.identities[0].images[1].id = manifest.identities[0].images[0].id;
    CHECK_THROWS_AS(validate_manifest(manifest, dir), FormatError);
  }
  SUBCASE("untouched manifest passes") {
    CHECK_NOTHROW(validate_manifest(manifest, dir));
  }
}

TEST_CASE("manifest save/load round-trip preserves bytes") {
  SyntheticConfig cfg;
  cfg.train_identities = 3;
  cfg.test_identities = 2;
  cfg.attributes = 4;
  cfg.channels = 2;
  cfg.height = 2;
  cfg.width = 2;
  cfg.flavor = Flavor::reid_style;
  const fs::path dir = temp_dir("manifest_rt");
  generate_synthetic(cfg, dir);
  const std::string first = read_bytes(dir / "manifest.json");
  DatasetManifest manifest = load_manifest(dir / "manifest.json");
  save_manifest(dir / "again.json", manifest);
  CHECK(read_bytes(dir / "again.json") == first);
}
