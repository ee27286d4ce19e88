#include "mfhi/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mfhi {

const std::map<std::string, std::string> KvConfig::kEmpty;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text, const Schema& schema,
                                const std::string& origin) {
  KvConfig config;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + ": malformed section header \"" + line + "\"");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema.count(section))
        throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected key = value, got \"" + line + "\"");
    if (section.empty())
      throw ConfigError(where + ": key outside any [section]");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    const auto& keys = schema.at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(where + ": unknown key \"" + key + "\" in section [" + section + "]");
    if (config.sections_[section].count(key))
      throw ConfigError(where + ": duplicate key \"" + key + "\"");
    config.sections_[section][key] = value;
  }
  return config;
}

KvConfig KvConfig::parse_file(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_string(text.str(), schema, path.string());
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

void KvConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

std::string KvConfig::get_string(const std::string& section, const std::string& key,
                                 const std::string& fallback) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return fallback;
  const auto kit = it->second.find(key);
  return kit == it->second.end() ? fallback : kit->second;
}

int KvConfig::get_int(const std::string& section, const std::string& key, int fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  try {
    size_t used = 0;
    const int value = std::stoi(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key + " = \"" + raw + "\" is not an integer");
  }
}

uint64_t KvConfig::get_u64(const std::string& section, const std::string& key,
                           uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  try {
    size_t used = 0;
    const unsigned long long value = std::stoull(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key + " = \"" + raw + "\" is not an integer");
  }
}

double KvConfig::get_double(const std::string& section, const std::string& key,
                            double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  try {
    size_t used = 0;
    const double value = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config: [" + section + "] " + key + " = \"" + raw + "\" is not a number");
  }
}

bool KvConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw ConfigError("config: [" + section + "] " + key + " = \"" + raw + "\" is not a boolean");
}

const std::map<std::string, std::string>& KvConfig::section(const std::string& name) const {
  const auto it = sections_.find(name);
  return it == sections_.end() ? kEmpty : it->second;
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string config_hash(const std::map<std::string, std::string>& resolved) {
  std::string canonical;
  for (const auto& [key, value] : resolved) {  // std::map iterates sorted
    canonical += key;
    canonical += '=';
    canonical += value;
    canonical += '\n';
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

}  // namespace mfhi
