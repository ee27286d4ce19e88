#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mfhi/error.hpp"

namespace mfhi {

// Line-oriented key = value configuration with [section] headers and '#'
// comments. Sections and keys are validated against a declared schema;
// unknown names are errors.
class KvConfig {
 public:
  using Schema = std::map<std::string, std::vector<std::string>>;

  static KvConfig parse_file(const std::filesystem::path& path, const Schema& schema);
  static KvConfig parse_string(const std::string& text, const Schema& schema,
                               const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& section(const std::string& name) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
  static const std::map<std::string, std::string> kEmpty;
};

uint64_t fnv1a64(const std::string& text);

// Stable digest of a resolved configuration: sorted key=value lines hashed
// with FNV-1a, printed as 16 hex digits.
std::string config_hash(const std::map<std::string, std::string>& resolved);

}  // namespace mfhi
