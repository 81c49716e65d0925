#include "kiwi/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kiwi {

using ordered_json = nlohmann::ordered_json;

std::string to_jsonl(const Detection& d, bool ground_truth) {
  ordered_json j;
  j["image_id"] = d.image_id;
  j["camera"] = std::string(to_string(d.camera));
  j["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
  if (!ground_truth) j["score"] = d.score;
  j["label"] = d.label;
  return j.dump();
}

namespace {

[[noreturn]] void fail_parse(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

Detection parse_detection(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail_parse(line_no, e.what());
  }
  if (!j.is_object()) fail_parse(line_no, "record is not an object");

  Detection d;
  std::string camera = "left";
  bool box_ok = true;
  try {
    d.image_id = j.at("image_id").get<std::string>();
    if (j.contains("camera")) camera = j.at("camera").get<std::string>();
    const auto& box = j.at("bbox");
    box_ok = box.is_array() && box.size() == 4;
    if (box_ok) {
      d.bbox = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
    }
    if (j.contains("score")) d.score = j.at("score").get<double>();
    if (j.contains("label")) d.label = j.at("label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail_parse(line_no, e.what());
  }
  if (!box_ok) fail_parse(line_no, "bbox must be [x,y,w,h]");
  if (camera != "left" && camera != "right") fail_parse(line_no, "unknown camera '" + camera + "'");
  d.camera = camera_from_string(camera);

  try {
    validate(d);
  } catch (const Error& e) {
    throw Error(ErrorCode::validation, "line " + std::to_string(line_no) + ": " + e.what());
  }
  return d;
}

std::vector<Detection> parse_detections(std::string_view text) {
  std::vector<Detection> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    out.push_back(parse_detection(line, line_no));
  }
  return out;
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  return parse_detections(read_text_file(path));
}

void write_detections(const std::filesystem::path& path, std::span<const Detection> detections,
                      bool ground_truth) {
  std::string text;
  for (const auto& d : detections) {
    text += to_jsonl(d, ground_truth);
    text += '\n';
  }
  write_text_file(path, text);
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  Manifest out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorCode::parse, path.string() + ": line " + std::to_string(line_no) + ": expected image_id,dataset");
    }
    std::string id = line.substr(0, comma);
    std::string group = line.substr(comma + 1);
    if (line_no == 1 && id == "image_id") continue;
    out.emplace_back(std::move(id), std::move(group));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::string text = "image_id,dataset\n";
  for (const auto& [id, group] : manifest) text += id + "," + group + "\n";
  write_text_file(path, text);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::io, "short write to '" + path.string() + "'");
}

}  // namespace kiwi
