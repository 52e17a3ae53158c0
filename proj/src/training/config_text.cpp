#include "cflow/training/config_text.hpp"

#include <charconv>
#include <sstream>

#include "cflow/errors.hpp"

namespace cflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected 'section.key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
      throw ConfigError("config line " + std::to_string(number) + ": key '" + key + "' is not of the form section.key");
    if (!map.emplace(key, value).second)
      throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
  }
  return map;
}

std::string format_config_text(const ConfigMap& map) {
  std::string out;
  for (const auto& [k, v] : map) out += k + " = " + v + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::optional<std::string> ConfigReader::raw(const std::string& key) {
  used_.insert(key);
  auto it = map_.find(key);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

std::string ConfigReader::get_string(const std::string& key, const std::string& fallback) {
  return raw(key).value_or(fallback);
}

double ConfigReader::get_double(const std::string& key, double fallback) {
  auto v = raw(key);
  if (!v) return fallback;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (v->empty() || ec != std::errc() || ptr != v->data() + v->size())
    throw ConfigError("config key '" + key + "': '" + *v + "' is not a number");
  return out;
}

std::uint64_t ConfigReader::get_uint(const std::string& key, std::uint64_t fallback) {
  auto v = raw(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (v->empty() || ec != std::errc() || ptr != v->data() + v->size())
    throw ConfigError("config key '" + key + "': '" + *v + "' is not a non-negative integer");
  return out;
}

bool ConfigReader::get_bool(const std::string& key, bool fallback) {
  auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "on" || *v == "1") return true;
  if (*v == "false" || *v == "off" || *v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + *v + "' is not a boolean (true/false)");
}

std::vector<std::string> ConfigReader::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : map_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

void ConfigReader::reject_unknown() const {
  const auto unused = unused_keys();
  if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
}

FlowConfig read_flow_config(ConfigReader& r) {
  FlowConfig c;
  c.input = parse_image_shape(r.get_string("model.input", c.input.to_string()));
  c.scales = r.get_uint("model.scales", c.scales);
  c.coupling_layers = r.get_uint("model.coupling_layers", c.coupling_layers);
  c.mask = parse_mask_kind(r.get_string("model.mask", std::string(mask_kind_name(c.mask))));
  c.stnet.hidden = r.get_uint("model.hidden", c.stnet.hidden);
  c.stnet.blocks = r.get_uint("model.blocks", c.stnet.blocks);
  c.stnet.bottleneck = r.get_uint("model.bottleneck", c.stnet.bottleneck);
  c.batchnorm = r.get_bool("model.batchnorm", c.batchnorm);
  c.bn_momentum = r.get_double("model.bn_momentum", c.bn_momentum);
  c.bn_eps = r.get_double("model.bn_eps", c.bn_eps);
  c.init_seed = r.get_uint("model.init_seed", c.init_seed);
  if (!(c.bn_momentum > 0.0 && c.bn_momentum <= 1.0)) throw ConfigError("model.bn_momentum must be in (0, 1]");
  if (!(c.bn_eps >= 0.0)) throw ConfigError("model.bn_eps must be non-negative");
  return c;
}

void write_flow_config(const FlowConfig& c, ConfigMap& out) {
  out["model.input"] = c.input.to_string();
  out["model.scales"] = std::to_string(c.scales);
  out["model.coupling_layers"] = std::to_string(c.coupling_layers);
  out["model.mask"] = std::string(mask_kind_name(c.mask));
  out["model.hidden"] = std::to_string(c.stnet.hidden);
  out["model.blocks"] = std::to_string(c.stnet.blocks);
  out["model.bottleneck"] = std::to_string(c.stnet.bottleneck);
  out["model.batchnorm"] = c.batchnorm ? "true" : "false";
  out["model.bn_momentum"] = format_double(c.bn_momentum);
  out["model.bn_eps"] = format_double(c.bn_eps);
  out["model.init_seed"] = std::to_string(c.init_seed);
}

}  // namespace cflow
