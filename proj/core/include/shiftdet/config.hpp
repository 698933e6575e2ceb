#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shiftdet/model_config.hpp"

namespace shiftdet {

/// Invalid configuration value or unknown key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `section.key = value` text. Blank lines and lines starting with '#'
/// are ignored; later assignments override earlier ones. Lists are
/// comma-separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  void set(std::string key, std::string value);

  std::string get_string(std::string_view key, const std::string& fallback) const;
  int get_int(std::string_view key, int fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<int> get_int_list(std::string_view key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(std::string_view key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(std::string_view key, const std::vector<std::string>& fallback) const;

  /// Throws ConfigError naming the first key under `section.` that is not in `known`.
  void require_known(std::string_view section, const std::vector<std::string_view>& known) const;

  const std::map<std::string, std::string, std::less<>>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

/// Reads the `model.` section; absent keys keep their defaults.
ModelConfig model_config_from(const KeyValueConfig& kv);

/// Inverse of ModelConfig::canonical().
ModelConfig parse_model_config_text(std::string_view text);

std::string join(const std::vector<std::string>& items, std::string_view sep);
std::vector<std::string> split_list(std::string_view text);

}  // namespace shiftdet
