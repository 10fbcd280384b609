#include "trajcast/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace trajcast {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream in(path);
  TRAJCAST_CHECK(in.good(), ErrorCode::Io, "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

KvConfig KvConfig::from_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    TRAJCAST_CHECK(eq != std::string::npos, ErrorCode::Parse,
                   "config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    TRAJCAST_CHECK(!key.empty(), ErrorCode::Parse,
                   "config line " + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

void KvConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string KvConfig::get_str(const std::string& key, const std::string& def) const {
  auto it = values_.find(key);
  const std::string v = it == values_.end() ? def : it->second;
  touched_[key] = v;
  return v;
}

double KvConfig::get_double(const std::string& key, double def) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", def);
    touched_[key] = buf;
    return def;
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    TRAJCAST_CHECK(pos == it->second.size(), ErrorCode::Parse, "bad number for " + key);
    touched_[key] = it->second;
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorCode::Parse, "config key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

int KvConfig::get_int(const std::string& key, int def) const {
  const double v = get_double(key, static_cast<double>(def));
  const int i = static_cast<int>(v);
  TRAJCAST_CHECK(static_cast<double>(i) == v, ErrorCode::Parse,
                 "config key '" + key + "': expected an integer");
  return i;
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t def) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    touched_[key] = std::to_string(def);
    return def;
  }
  try {
    const std::uint64_t v = std::stoull(it->second);
    touched_[key] = it->second;
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::Parse, "config key '" + key + "': expected an unsigned integer");
  }
}

bool KvConfig::get_bool(const std::string& key, bool def) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    touched_[key] = def ? "true" : "false";
    return def;
  }
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  touched_[key] = v;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::Parse, "config key '" + key + "': expected a boolean, got '" + it->second + "'");
}

std::vector<double> KvConfig::get_list(const std::string& key,
                                       const std::vector<double>& def) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    std::string s;
    for (std::size_t i = 0; i < def.size(); ++i) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%.17g", def[i]);
      s += (i ? "," : "") + std::string(buf);
    }
    touched_[key] = s;
    return def;
  }
  touched_[key] = it->second;
  std::vector<double> out;
  // "a:b:step" ranges and comma lists are both accepted
  const std::string& v = it->second;
  if (std::count(v.begin(), v.end(), ':') == 2) {
    double lo, hi, step;
    char c1, c2;
    std::istringstream ss(v);
    TRAJCAST_CHECK(static_cast<bool>(ss >> lo >> c1 >> hi >> c2 >> step) && c1 == ':' && c2 == ':',
                   ErrorCode::Parse, "config key '" + key + "': bad range syntax");
    TRAJCAST_CHECK(step > 0.0 && hi >= lo, ErrorCode::Parse,
                   "config key '" + key + "': bad range bounds");
    for (double x = lo; x <= hi + 1e-12; x += step) out.push_back(x);
    return out;
  }
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(ErrorCode::Parse, "config key '" + key + "': bad list entry '" + item + "'");
    }
  }
  TRAJCAST_CHECK(!out.empty(), ErrorCode::Parse, "config key '" + key + "': empty list");
  return out;
}

std::vector<std::string> KvConfig::unread_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!touched_.count(k)) out.push_back(k);
  return out;
}

std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
  const char* root = std::getenv("TRAJCAST_DATA_ROOT");
  if (!root || !*root) return path;
  const fs::path joined = fs::path(root) / path;
  return joined.string();
}

}  // namespace trajcast
