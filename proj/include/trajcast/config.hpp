#pragma once

// Structured key-value configuration ("key = value" lines, '#' comments).
// Every key read through a typed getter is recorded with its final value so
// run manifests can echo the complete effective configuration, including
// defaults that were never written down.

#include <map>
#include <string>
#include <vector>

#include "trajcast/common.hpp"

namespace trajcast {

class KvConfig {
 public:
  KvConfig() = default;
  static KvConfig load(const std::string& path);
  static KvConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& def) const;

  // Explicitly set keys (for echo / unknown-key detection).
  const std::map<std::string, std::string>& raw() const { return values_; }
  // Every key read so far, with the value actually used.
  const std::map<std::string, std::string>& effective() const { return touched_; }
  // Set but never read: typo detection.
  std::vector<std::string> unread_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> touched_;
};

// Resolves a dataset path against $TRAJCAST_DATA_ROOT when it is relative
// and does not exist as given.
std::string resolve_data_path(const std::string& path);

}  // namespace trajcast
