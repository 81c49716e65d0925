#include "kiwi/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kiwi/core.hpp"
#include "kiwi/jsonl.hpp"

namespace kiwi {

namespace {

std::string join_key(std::string_view section, std::string_view key) {
  std::string k(section);
  k += '.';
  k += key;
  return k;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view section, std::string_view key, const std::string& value,
                            std::string_view want) {
  throw Error(ErrorCode::config, "[" + std::string(section) + "] " + std::string(key) + " = '" + value +
                                     "' is not " + std::string(want));
}

}  // namespace

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  try {
    return parse(read_text_file(path), base);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

ConfigFile ConfigFile::parse(std::string_view text, std::filesystem::path base_dir) {
  namespace pt = boost::property_tree;
  // Trailing "# ..." comments are not understood by the INI reader.
  std::string cleaned;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    cleaned += line;
    cleaned += '\n';
  }

  pt::ptree tree;
  std::istringstream in(cleaned);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::parse, "line " + std::to_string(e.line()) + ": " + e.message());
  }

  ConfigFile cfg;
  cfg.base_dir_ = std::move(base_dir);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      // Top-level key outside any section.
      cfg.values_[join_key("", section)] = trim(body.data());
      continue;
    }
    cfg.sections_.push_back(section);
    for (const auto& [key, value] : body) cfg.values_[join_key(section, key)] = trim(value.data());
  }
  return cfg;
}

bool ConfigFile::has(std::string_view section, std::string_view key) const {
  return values_.contains(join_key(section, key));
}

bool ConfigFile::has_section(std::string_view section) const {
  return std::find(sections_.begin(), sections_.end(), section) != sections_.end();
}

std::optional<std::string> ConfigFile::find(std::string_view section, std::string_view key) const {
  auto it = values_.find(join_key(section, key));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string ConfigFile::get_string(std::string_view section, std::string_view key, std::string fallback) const {
  return find(section, key).value_or(std::move(fallback));
}

double ConfigFile::get_double(std::string_view section, std::string_view key, double fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size()) bad_value(section, key, *v, "a number");
  return out;
}

long long ConfigFile::get_int(std::string_view section, std::string_view key, long long fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size()) bad_value(section, key, *v, "an integer");
  return out;
}

bool ConfigFile::get_bool(std::string_view section, std::string_view key, bool fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  bad_value(section, key, *v, "a boolean");
}

std::vector<double> ConfigFile::get_doubles(std::string_view section, std::string_view key,
                                            std::vector<double> fallback) const {
  auto v = find(section, key);
  if (!v) return fallback;
  try {
    return parse_number_list(*v);
  } catch (const Error&) {
    bad_value(section, key, *v, "a list of numbers");
  }
}

std::filesystem::path ConfigFile::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

std::vector<std::string> ConfigFile::sections() const { return sections_; }

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == ',')) ++i;
    if (i >= text.size()) break;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + text.size(), value);
    if (ec != std::errc{}) throw Error(ErrorCode::parse, "bad number list '" + std::string(text) + "'");
    out.push_back(value);
    i = static_cast<std::size_t>(ptr - text.data());
  }
  return out;
}

}  // namespace kiwi
