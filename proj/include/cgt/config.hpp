#pragma once

#include <map>
#include <string>

namespace cgt {

struct BlockCounts {
  int nl = 6;
  int ast = 5;
  int test_info = 6;
  int code = 5;
  int decoder = 2;
  bool operator==(const BlockCounts&) const = default;
};

struct ModelConfig {
  int d = 256;
  int heads = 8;
  int k_window = 3;
  int conv_layers = 2;
  BlockCounts blocks;
  int ff_first = 1024;
  double dropout_rate = 0.15;
  int L_max = 512;
  int S_max = 16;
  int char_dim = 32;
  int N_iterations = 3;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
  /// d=64, H=4, every block count 2: the small setting used for quick runs.
  static ModelConfig reduced();
  bool operator==(const ModelConfig&) const = default;
};

/// Flat `key = value` records. `#` starts a comment; `include <path>` pulls
/// in another file (relative to the including file) whose keys can be
/// overridden by later lines.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& base_dir = ".");
KeyValues load_key_values(const std::string& path);
std::string format_key_values(const KeyValues& kv);

/// Applies recognized model keys (`d`, `heads`, `blocks.nl`, ...) from `kv`
/// on top of `base`. Unknown keys are ignored; malformed values throw
/// ConfigError.
ModelConfig model_config_from(const KeyValues& kv, ModelConfig base = {});
KeyValues to_key_values(const ModelConfig& config);

/// Typed accessors that throw ConfigError on malformed values.
int get_int(const KeyValues& kv, const std::string& key, int fallback);
double get_double(const KeyValues& kv, const std::string& key, double fallback);
bool get_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback);

}  // namespace cgt
