#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gspot {

// Flat "key = value" config file. '#' starts a comment, blank lines are
// ignored, keys are unique. See configs/ for documented key sets.
class Config {
 public:
  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& def) const;
  std::string require_str(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  double get_real(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  // comma-separated list
  std::vector<int64_t> get_int_list(const std::string& key,
                                    const std::vector<int64_t>& def) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_int(const std::string& key, int64_t v) { kv_[key] = std::to_string(v); }
  void set_real(const std::string& key, double v);

  // Canonical serialization: sorted keys, one "key = value" per line.
  // This is what gets copied into experiment output directories and hashed.
  std::string to_string() const;
  uint64_t content_hash() const;  // FNV-1a over to_string()

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

uint64_t fnv1a(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace gspot
