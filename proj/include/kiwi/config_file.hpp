#pragma once

// Sectioned "key = value" text configs shared by every module:
//
//   # comment
//   [saliency]
//   scales = 1 2 4
//   surround_radius = 16

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kiwi {

class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile load(const std::filesystem::path& path);
  static ConfigFile parse(std::string_view text, std::filesystem::path base_dir = {});

  bool has(std::string_view section, std::string_view key) const;
  bool has_section(std::string_view section) const;

  std::optional<std::string> find(std::string_view section, std::string_view key) const;
  std::string get_string(std::string_view section, std::string_view key, std::string fallback) const;
  double get_double(std::string_view section, std::string_view key, double fallback) const;
  long long get_int(std::string_view section, std::string_view key, long long fallback) const;
  bool get_bool(std::string_view section, std::string_view key, bool fallback) const;
  // Whitespace- or comma-separated numbers.
  std::vector<double> get_doubles(std::string_view section, std::string_view key,
                                  std::vector<double> fallback) const;

  // Relative paths resolve against the directory holding the config file.
  std::filesystem::path resolve(const std::filesystem::path& p) const;

  // Section names in file order.
  std::vector<std::string> sections() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;  // "section.key" -> value
  std::vector<std::string> sections_;
  std::filesystem::path base_dir_;
};

std::vector<double> parse_number_list(std::string_view text);

}  // namespace kiwi
