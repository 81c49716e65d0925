#pragma once

// Detection interchange (JSON Lines) and the small CSV manifest format.
//
// Record layout, field order fixed:
//   {"image_id":str,"camera":"left"|"right","bbox":[x,y,w,h],"score":f,"label":"flower"}
// Ground-truth records omit "score" and read back with score 1.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kiwi/core.hpp"

namespace kiwi {

std::string to_jsonl(const Detection& d, bool ground_truth = false);

// Parses one record. `line_no` is only used in error messages.
Detection parse_detection(std::string_view line, std::size_t line_no = 0);

// Blank lines are skipped. Malformed lines raise Error(parse) naming the
// 1-based line number; invariant violations raise Error(validation).
std::vector<Detection> read_detections(const std::filesystem::path& path);
std::vector<Detection> parse_detections(std::string_view text);

void write_detections(const std::filesystem::path& path, std::span<const Detection> detections,
                      bool ground_truth = false);

// image_id -> dataset, in file order. An optional "image_id,dataset" header is skipped.
using Manifest = std::vector<std::pair<std::string, std::string>>;

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace kiwi
