#include "mfhi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mfhi/rng.hpp"

namespace mfhi {

namespace fs = std::filesystem;
using nlohmann::json;

// --- tensor container ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'F', 'T', '1'};
constexpr uint32_t kMaxRank = 4;
constexpr uint64_t kMaxElements = 1ull << 31;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path, std::streamoff offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw FormatError("tensor file truncated at offset " + std::to_string(offset) +
                      ": " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

static_assert(sizeof(float) == 4, "float must be 32-bit IEEE-754");

void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  if (t.rank() < 1 || t.rank() > static_cast<int>(kMaxRank))
    throw FormatError("write_tensor: rank must be 1..4, got " + std::to_string(t.rank()));
  out.write(kMagic, 4);
  put_u32(out, static_cast<uint32_t>(t.rank()));
  for (int e : t.shape()) put_u32(out, static_cast<uint32_t>(e));
  for (float v : t.value()) put_f32(out, v);
}

void write_tensor(const fs::path& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_tensor: cannot open " + path.string());
  write_tensor(out, t);
  out.flush();
  if (!out) throw IoError("write_tensor: write failed for " + path.string());
}

namespace {

std::vector<int> read_header(std::istream& in, const std::string& path, uint64_t* elements) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic at offset 0: " + path);
  const uint32_t rank = get_u32(in, path, 4);
  if (rank < 1 || rank > kMaxRank)
    throw FormatError("bad rank " + std::to_string(rank) + " at offset 4: " + path);
  std::vector<int> shape(rank);
  uint64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const std::streamoff off = 8 + 4 * static_cast<std::streamoff>(i);
    const uint32_t e = get_u32(in, path, off);
    if (e == 0)
      throw FormatError("zero extent at offset " + std::to_string(off) + ": " + path);
    n *= e;
    if (n > kMaxElements)
      throw FormatError("extent overflow at offset " + std::to_string(off) + ": " + path);
    shape[i] = static_cast<int>(e);
  }
  *elements = n;
  return shape;
}

}  // namespace

Tensor<float> read_tensor(std::istream& in, const std::string& name) {
  uint64_t n = 0;
  std::vector<int> shape = read_header(in, name, &n);
  const std::streamoff header = 8 + 4 * static_cast<std::streamoff>(shape.size());
  std::vector<float> data(n);
  std::vector<unsigned char> raw(n * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<uint64_t>(in.gcount()) != raw.size())
    throw FormatError("tensor file truncated at offset " +
                      std::to_string(header + in.gcount()) + ": " + name);
  for (uint64_t i = 0; i < n; ++i) {
    uint32_t bits = static_cast<uint32_t>(raw[4 * i]) |
                    (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                    (static_cast<uint32_t>(raw[4 * i + 2]) << 16) |
                    (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
    std::memcpy(&data[i], &bits, 4);
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

Tensor<float> read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor: cannot open " + path.string());
  Tensor<float> t = read_tensor(in, path.string());
  in.peek();
  if (!in.eof()) {
    const std::streamoff used = 8 + 4 * static_cast<std::streamoff>(t.rank()) + 4 * t.size();
    throw FormatError("trailing bytes at offset " + std::to_string(used) + ": " + path.string());
  }
  return t;
}

std::vector<int> read_tensor_shape(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor_shape: cannot open " + path.string());
  uint64_t n = 0;
  std::vector<int> shape = read_header(in, path.string(), &n);
  in.seekg(0, std::ios::end);
  const uint64_t expected = 8 + 4 * shape.size() + 4 * n;
  if (static_cast<uint64_t>(in.tellg()) != expected)
    throw FormatError("tensor file size mismatch (expected " + std::to_string(expected) +
                      " bytes): " + path.string());
  return shape;
}

// --- enum names -----------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test_gallery: return "test-gallery";
    case Split::test_probe: return "test-probe";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test-gallery") return Split::test_gallery;
  if (s == "test-probe") return Split::test_probe;
  throw FormatError("unknown split \"" + s + "\"");
}

std::string to_string(Flavor f) {
  return f == Flavor::face_style ? "face-style" : "reid-style";
}

Flavor flavor_from_string(const std::string& s) {
  if (s == "face-style") return Flavor::face_style;
  if (s == "reid-style") return Flavor::reid_style;
  throw FormatError("unknown flavor \"" + s + "\"");
}

bool DatasetManifest::identity_is_train(const IdentityRecord& identity) const {
  for (const auto& image : identity.images)
    if (image.split != Split::train) return false;
  return !identity.images.empty();
}

// --- manifest I/O -----------------------------------------------------------------

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("load_manifest: " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.schema_version = doc.at("schema_version").get<int>();
    if (m.schema_version != 1)
      throw FormatError("load_manifest: unsupported schema_version " +
                        std::to_string(m.schema_version));
    m.flavor = flavor_from_string(doc.at("flavor").get<std::string>());
    m.attribute_names = doc.at("attributes").get<std::vector<std::string>>();
    const auto fshape = doc.at("feature_shape").get<std::vector<int>>();
    if (fshape.size() != 3) throw FormatError("load_manifest: feature_shape must have 3 extents");
    std::copy(fshape.begin(), fshape.end(), m.feature_shape.begin());
    for (const auto& jid : doc.at("identities")) {
      IdentityRecord identity;
      identity.id = jid.at("id").get<std::string>();
      for (const auto& jim : jid.at("images")) {
        ImageRecord image;
        image.id = jim.at("id").get<std::string>();
        image.file = jim.at("file").get<std::string>();
        image.attributes = jim.at("attributes").get<std::vector<int>>();
        image.split = split_from_string(jim.at("split").get<std::string>());
        if (jim.contains("semantic_id")) image.semantic_id = jim.at("semantic_id").get<int>();
        identity.images.push_back(std::move(image));
      }
      m.identities.push_back(std::move(identity));
    }
  } catch (const json::exception& e) {
    throw FormatError("load_manifest: " + path.string() + ": " + e.what());
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json doc;
  doc["schema_version"] = manifest.schema_version;
  doc["flavor"] = to_string(manifest.flavor);
  doc["attributes"] = manifest.attribute_names;
  doc["feature_shape"] = manifest.feature_shape;
  json ids = json::array();
  for (const auto& identity : manifest.identities) {
    json jid;
    jid["id"] = identity.id;
    json images = json::array();
    for (const auto& image : identity.images) {
      json jim;
      jim["id"] = image.id;
      jim["file"] = image.file;
      jim["attributes"] = image.attributes;
      jim["split"] = to_string(image.split);
      if (image.semantic_id >= 0) jim["semantic_id"] = image.semantic_id;
      images.push_back(std::move(jim));
    }
    jid["images"] = std::move(images);
    ids.push_back(std::move(jid));
  }
  doc["identities"] = std::move(ids);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("save_manifest: cannot open " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("save_manifest: write failed for " + path.string());
}

void validate_manifest(const DatasetManifest& manifest, const fs::path& root) {
  const int q = manifest.attribute_count();
  if (q < 1) throw FormatError("manifest: no attributes declared");
  for (int e : manifest.feature_shape)
    if (e < 1) throw FormatError("manifest: feature_shape extents must be positive");

  std::set<std::string> identity_ids, image_ids;
  std::set<std::string> train_ids, test_ids;
  for (const auto& identity : manifest.identities) {
    if (!identity_ids.insert(identity.id).second)
      throw FormatError("manifest: duplicate identity id \"" + identity.id + "\"");
    if (identity.images.empty())
      throw FormatError("manifest: identity \"" + identity.id + "\" has no images");
    for (const auto& image : identity.images) {
      if (!image_ids.insert(image.id).second)
        throw FormatError("manifest: duplicate image id \"" + image.id + "\"");
      if (static_cast<int>(image.attributes.size()) != q)
        throw FormatError("manifest: image \"" + image.id + "\" has " +
                          std::to_string(image.attributes.size()) +
                          " attributes, expected " + std::to_string(q));
      for (int v : image.attributes)
        if (v != 0 && v != 1)
          throw FormatError("manifest: image \"" + image.id + "\" has non-binary attribute");
      if (image.split == Split::train)
        train_ids.insert(identity.id);
      else
        test_ids.insert(identity.id);
      const fs::path file = root / image.file;
      if (!fs::exists(file))
        throw FormatError("manifest: missing tensor file " + file.string());
      const auto shape = read_tensor_shape(file);
      if (shape.size() != 3 || shape[0] != manifest.feature_shape[0] ||
          shape[1] != manifest.feature_shape[1] || shape[2] != manifest.feature_shape[2])
        throw FormatError("manifest: tensor " + file.string() +
                          " does not match the declared feature shape");
    }
  }
  for (const auto& id : train_ids)
    if (test_ids.count(id))
      throw ProtocolError("manifest: identity \"" + id + "\" appears in both train and test splits");
}

// --- attribute preprocessing -------------------------------------------------------

std::vector<int> one_hot_expand(const std::vector<int>& values,
                                const std::vector<AttributeColumn>& schema) {
  if (values.size() != schema.size())
    throw ArgumentError("one_hot_expand: got " + std::to_string(values.size()) +
                        " values for " + std::to_string(schema.size()) + " columns");
  std::vector<int> out;
  for (size_t i = 0; i < schema.size(); ++i) {
    const auto& col = schema[i];
    const int v = values[i];
    if (!col.categorical) {
      if (v != 0 && v != 1)
        throw FormatError("one_hot_expand: binary column \"" + col.name +
                          "\" has value " + std::to_string(v));
      out.push_back(v);
    } else {
      if (col.arity < 2)
        throw ArgumentError("one_hot_expand: categorical column \"" + col.name +
                            "\" needs arity >= 2");
      if (v < 0 || v >= col.arity)
        throw FormatError("one_hot_expand: column \"" + col.name + "\" value " +
                          std::to_string(v) + " outside arity " + std::to_string(col.arity));
      for (int k = 0; k < col.arity; ++k) out.push_back(k == v ? 1 : 0);
    }
  }
  return out;
}

std::vector<std::string> one_hot_names(const std::vector<AttributeColumn>& schema) {
  std::vector<std::string> names;
  for (const auto& col : schema) {
    if (!col.categorical) {
      names.push_back(col.name);
    } else {
      for (int k = 0; k < col.arity; ++k)
        names.push_back(col.name + "=" + std::to_string(k));
    }
  }
  return names;
}

int assign_semantic_ids(DatasetManifest& manifest) {
  if (manifest.flavor != Flavor::reid_style)
    throw ArgumentError("assign_semantic_ids: manifest is not reid-style");
  std::map<std::vector<int>, int> seen;
  int next = 0;
  for (auto& identity : manifest.identities) {
    for (auto& image : identity.images) {
      auto [it, inserted] = seen.emplace(image.attributes, next);
      if (inserted) ++next;
      image.semantic_id = it->second;
    }
  }
  return next;
}

// --- splits -----------------------------------------------------------------------

std::pair<std::vector<std::string>, std::vector<std::string>> split_identities(
    const std::vector<std::string>& ids, const SplitSpec& spec, uint64_t seed) {
  const int n = static_cast<int>(ids.size());
  int train_count = 0;
  if (spec.counts) {
    train_count = spec.counts->first;
    if (spec.counts->first + spec.counts->second != n)
      throw ConfigError("split_identities: counts " + std::to_string(spec.counts->first) +
                        "+" + std::to_string(spec.counts->second) + " do not cover " +
                        std::to_string(n) + " identities");
  } else if (spec.train_ratio) {
    train_count = static_cast<int>(std::llround(*spec.train_ratio * n));
  } else {
    throw ConfigError("split_identities: neither ratio nor counts given");
  }
  if (train_count < 1 || train_count >= n)
    throw ConfigError("split_identities: split leaves an empty side (train " +
                      std::to_string(train_count) + " of " + std::to_string(n) + ")");
  std::vector<std::string> pool = ids;
  Rng rng(seed);
  rng.shuffle(pool);
  std::vector<std::string> train(pool.begin(), pool.begin() + train_count);
  std::vector<std::string> test(pool.begin() + train_count, pool.end());
  return {std::move(train), std::move(test)};
}

// --- synthetic generator -------------------------------------------------------------

namespace {

std::string zero_pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", std::min(width, 12), v);
  return buf;
}

}  // namespace

void generate_synthetic(const SyntheticConfig& cfg, const fs::path& out_dir) {
  if (cfg.train_identities < 2 || cfg.test_identities < 2)
    throw ConfigError("generate_synthetic: need at least 2 identities per side");
  if (cfg.attributes < 2) throw ConfigError("generate_synthetic: need at least 2 attributes");
  if (cfg.flip_prob < 0 || cfg.flip_prob >= 0.5)
    throw ConfigError("generate_synthetic: flip_prob must lie in [0, 0.5)");
  if (cfg.channels < 1 || cfg.height < 1 || cfg.width < 1 || cfg.images_per_identity < 1)
    throw ConfigError("generate_synthetic: geometry extents must be positive");

  const int q = cfg.attributes, c = cfg.channels, h = cfg.height, w = cfg.width;
  const int total_ids = cfg.train_identities + cfg.test_identities;

  fs::create_directories(out_dir / "features");
  fs::create_directories(out_dir / "planted");

  Rng base(cfg.seed);
  Rng rng_basis = base.fork(1);
  Rng rng_vectors = base.fork(2);
  Rng rng_split = base.fork(3);
  Rng rng_images = base.fork(4);

  // Rank-one attribute bases: a channel signature spread over a small spatial
  // rectangle, zero elsewhere. Localized supports keep the attention maps
  // interpretable and the attributes separable by construction.
  const int rect_h = (h + 2) / 3, rect_w = (w + 2) / 3;
  PlantedInfo planted;
  std::vector<Tensor<float>> bases;
  for (int a = 0; a < q; ++a) {
    PlantedRect rect;
    rect.height = rect_h;
    rect.width = rect_w;
    rect.top = static_cast<int>(rng_basis.uniform_u32(static_cast<uint32_t>(h - rect_h + 1)));
    rect.left = static_cast<int>(rng_basis.uniform_u32(static_cast<uint32_t>(w - rect_w + 1)));
    std::vector<double> signature(c);
    double norm = 0;
    for (int i = 0; i < c; ++i) {
      signature[i] = rng_basis.normal();
      norm += signature[i] * signature[i];
    }
    norm = std::sqrt(norm);
    Tensor<float> basis({c, h, w});
    for (int row = rect.top; row < rect.top + rect.height; ++row)
      for (int col = rect.left; col < rect.left + rect.width; ++col) {
        const float bump = static_cast<float>(rng_basis.uniform(0.5, 1.5));
        for (int i = 0; i < c; ++i)
          basis[i * h * w + row * w + col] = static_cast<float>(signature[i] / norm) * bump;
      }
    const std::string file = "planted/basis_" + zero_pad(a, 2) + ".mft";
    write_tensor(out_dir / file, basis);
    planted.rects.push_back(rect);
    planted.basis_files.push_back(file);
    bases.push_back(std::move(basis));
  }

  // Ground-truth identity vectors, pairwise distinct for face-style data.
  std::set<std::vector<int>> used;
  std::vector<std::vector<int>> vectors;
  for (int id = 0; id < total_ids; ++id) {
    std::vector<int> g(q);
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      int active = 0;
      for (int a = 0; a < q; ++a) {
        g[a] = rng_vectors.uniform() < (1.0 / 3.0) ? 1 : 0;
        active += g[a];
      }
      if (active == 0) continue;
      ok = cfg.flavor == Flavor::reid_style || used.insert(g).second;
    }
    if (!ok)
      throw ConfigError("generate_synthetic: could not draw distinct identity vectors; "
                        "increase the attribute count");
    vectors.push_back(g);
  }

  const int id_width = std::max(3, static_cast<int>(std::to_string(total_ids - 1).size()));
  std::vector<std::string> identity_ids;
  for (int id = 0; id < total_ids; ++id) identity_ids.push_back("id_" + zero_pad(id, id_width));

  SplitSpec spec;
  spec.counts = {cfg.train_identities, cfg.test_identities};
  // rng_split is consumed through split_identities' own seed derivation
  auto [train_ids, test_ids] = split_identities(identity_ids, spec, rng_split.next());
  std::set<std::string> train_set(train_ids.begin(), train_ids.end());

  DatasetManifest manifest;
  manifest.flavor = cfg.flavor;
  manifest.feature_shape = {c, h, w};
  for (int a = 0; a < q; ++a) manifest.attribute_names.push_back("attr" + zero_pad(a, 2));

  const int hw = h * w;
  for (int id = 0; id < total_ids; ++id) {
    IdentityRecord identity;
    identity.id = identity_ids[id];
    const bool is_train = train_set.count(identity.id) > 0;
    const std::vector<int>& g = vectors[id];
    planted.identity_attributes[identity.id] = g;

    // Test images alternate gallery/probe so both sides stay populated.
    for (int im = 0; im < cfg.images_per_identity; ++im) {
      ImageRecord image;
      image.id = identity.id + "_im" + std::to_string(im);
      image.file = "features/" + image.id + ".mft";
      image.split = is_train ? Split::train
                             : (im % 2 == 0 ? Split::test_gallery : Split::test_probe);

      Tensor<float> feature({c, h, w});
      for (int a = 0; a < q; ++a) {
        if (!g[a]) continue;
        const float* pb = bases[a].data();
        float* pf = feature.data();
        for (int i = 0; i < c * hw; ++i) pf[i] += pb[i];
      }
      if (cfg.noise_scale > 0) {
        float* pf = feature.data();
        for (int i = 0; i < c * hw; ++i)
          pf[i] += static_cast<float>(cfg.noise_scale * rng_images.normal());
      }
      write_tensor(out_dir / image.file, feature);

      image.attributes = g;
      for (int a = 0; a < q; ++a)
        if (rng_images.uniform() < cfg.flip_prob) image.attributes[a] ^= 1;
      identity.images.push_back(std::move(image));
    }
    manifest.identities.push_back(std::move(identity));
  }

  if (cfg.flavor == Flavor::reid_style) assign_semantic_ids(manifest);
  save_manifest(out_dir / "manifest.json", manifest);

  json jp;
  json rects = json::array();
  for (const auto& r : planted.rects)
    rects.push_back({{"top", r.top}, {"left", r.left}, {"height", r.height}, {"width", r.width}});
  jp["rects"] = std::move(rects);
  jp["basis_files"] = planted.basis_files;
  jp["identity_attributes"] = planted.identity_attributes;
  std::ofstream out(out_dir / "planted.json", std::ios::trunc);
  if (!out) throw IoError("generate_synthetic: cannot write planted.json");
  out << jp.dump(2) << "\n";
}

PlantedInfo load_planted(const fs::path& dataset_dir) {
  std::ifstream in(dataset_dir / "planted.json");
  if (!in) throw IoError("load_planted: cannot open " + (dataset_dir / "planted.json").string());
  json doc;
  try {
    in >> doc;
    PlantedInfo info;
    for (const auto& jr : doc.at("rects")) {
      PlantedRect r;
      r.top = jr.at("top").get<int>();
      r.left = jr.at("left").get<int>();
      r.height = jr.at("height").get<int>();
      r.width = jr.at("width").get<int>();
      info.rects.push_back(r);
    }
    info.basis_files = doc.at("basis_files").get<std::vector<std::string>>();
    info.identity_attributes =
        doc.at("identity_attributes").get<std::map<std::string, std::vector<int>>>();
    return info;
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_planted: ") + e.what());
  }
}

// --- Dataset -------------------------------------------------------------------------

Dataset Dataset::load(const fs::path& dir) {
  Dataset ds;
  ds.root_ = dir;
  ds.manifest_ = load_manifest(dir / "manifest.json");
  validate_manifest(ds.manifest_, dir);
  return ds;
}

Tensor<float> Dataset::load_feature(const ImageRecord& image) const {
  return read_tensor(root_ / image.file);
}

const ImageRecord* Dataset::find_image(const std::string& image_id) const {
  for (const auto& identity : manifest_.identities)
    for (const auto& image : identity.images)
      if (image.id == image_id) return &image;
  return nullptr;
}

const IdentityRecord* Dataset::identity_of(const std::string& image_id) const {
  for (const auto& identity : manifest_.identities)
    for (const auto& image : identity.images)
      if (image.id == image_id) return &identity;
  return nullptr;
}

std::vector<const IdentityRecord*> Dataset::train_identities() const {
  std::vector<const IdentityRecord*> out;
  for (const auto& identity : manifest_.identities)
    if (manifest_.identity_is_train(identity)) out.push_back(&identity);
  return out;
}

std::vector<const IdentityRecord*> Dataset::test_identities() const {
  std::vector<const IdentityRecord*> out;
  for (const auto& identity : manifest_.identities)
    if (!manifest_.identity_is_train(identity)) out.push_back(&identity);
  return out;
}

}  // namespace mfhi
