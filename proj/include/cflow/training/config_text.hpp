#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cflow/flow/model.hpp"

namespace cflow {

/// Flat `section.key = value` configuration, sorted by key.
using ConfigMap = std::map<std::string, std::string>;

/// Parses config text. `#` starts a comment; blank lines are ignored. Keys
/// must look like `section.key`; duplicates are errors.
ConfigMap parse_config_text(const std::string& text);
/// Canonical form: one `key = value` line per entry in key order.
std::string format_config_text(const ConfigMap& map);

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

/// Typed reads that remember which keys were consumed.
class ConfigReader {
 public:
  explicit ConfigReader(const ConfigMap& map) : map_(map) {}

  std::optional<std::string> raw(const std::string& key);
  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);

  /// Keys present in the map but never read.
  std::vector<std::string> unused_keys() const;
  /// Throws ConfigError naming the first unused key.
  void reject_unknown() const;

 private:
  const ConfigMap& map_;
  std::set<std::string> used_;
};

/// `model.*` keys.
FlowConfig read_flow_config(ConfigReader& reader);
void write_flow_config(const FlowConfig& config, ConfigMap& out);

}  // namespace cflow
