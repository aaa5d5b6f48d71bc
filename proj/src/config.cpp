#include "cgt/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ModelConfig::validate() const {
  if (d <= 0 || heads <= 0) throw ConfigError("d and heads must be positive");
  if (d % heads != 0) throw ConfigError("d must be divisible by heads");
  if (d % 2 != 0) throw ConfigError("d must be even for the positional encoding");
  if (k_window < 1 || k_window % 2 == 0) throw ConfigError("k_window must be a positive odd number");
  if (conv_layers < 1) throw ConfigError("conv_layers must be at least 1");
  if (blocks.nl < 1 || blocks.ast < 1 || blocks.test_info < 1 || blocks.code < 1 || blocks.decoder < 1) {
    throw ConfigError("every block count must be at least 1");
  }
  if (ff_first < 1) throw ConfigError("ff_first must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (L_max < 1 || S_max < 1 || char_dim < 1) throw ConfigError("L_max, S_max and char_dim must be positive");
  if (N_iterations < 1) throw ConfigError("N_iterations must be at least 1");
}

ModelConfig ModelConfig::reduced() {
  ModelConfig c;
  c.d = 64;
  c.heads = 4;
  c.blocks = {2, 2, 2, 2, 2};
  c.ff_first = 256;
  c.char_dim = 8;
  return c;
}

KeyValues parse_key_values(const std::string& text, const std::string& base_dir) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("include ", 0) == 0) {
      std::filesystem::path p = trim(line.substr(8));
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      for (auto& [k, v] : load_key_values(p.string())) kv[k] = v;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

int get_int(const KeyValues& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": not an integer: " + s);
  return v;
}

double get_double(const KeyValues& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw ConfigError(key + ": not a number: " + it->second);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": not a number: " + it->second);
  }
}

bool get_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": not a boolean: " + s);
}

std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

ModelConfig model_config_from(const KeyValues& kv, ModelConfig c) {
  c.d = get_int(kv, "d", c.d);
  c.heads = get_int(kv, "heads", c.heads);
  c.k_window = get_int(kv, "k_window", c.k_window);
  c.conv_layers = get_int(kv, "conv_layers", c.conv_layers);
  c.blocks.nl = get_int(kv, "blocks.nl", c.blocks.nl);
  c.blocks.ast = get_int(kv, "blocks.ast", c.blocks.ast);
  c.blocks.test_info = get_int(kv, "blocks.test_info", c.blocks.test_info);
  c.blocks.code = get_int(kv, "blocks.code", c.blocks.code);
  c.blocks.decoder = get_int(kv, "blocks.decoder", c.blocks.decoder);
  c.ff_first = get_int(kv, "ff_first", c.ff_first);
  c.dropout_rate = get_double(kv, "dropout_rate", c.dropout_rate);
  c.L_max = get_int(kv, "L_max", c.L_max);
  c.S_max = get_int(kv, "S_max", c.S_max);
  c.char_dim = get_int(kv, "char_dim", c.char_dim);
  c.N_iterations = get_int(kv, "N_iterations", c.N_iterations);
  return c;
}

KeyValues to_key_values(const ModelConfig& c) {
  std::ostringstream dr;
  dr.precision(17);
  dr << c.dropout_rate;
  return {
      {"d", std::to_string(c.d)},
      {"heads", std::to_string(c.heads)},
      {"k_window", std::to_string(c.k_window)},
      {"conv_layers", std::to_string(c.conv_layers)},
      {"blocks.nl", std::to_string(c.blocks.nl)},
      {"blocks.ast", std::to_string(c.blocks.ast)},
      {"blocks.test_info", std::to_string(c.blocks.test_info)},
      {"blocks.code", std::to_string(c.blocks.code)},
      {"blocks.decoder", std::to_string(c.blocks.decoder)},
      {"ff_first", std::to_string(c.ff_first)},
      {"dropout_rate", dr.str()},
      {"L_max", std::to_string(c.L_max)},
      {"S_max", std::to_string(c.S_max)},
      {"char_dim", std::to_string(c.char_dim)},
      {"N_iterations", std::to_string(c.N_iterations)},
  };
}

}  // namespace cgt
