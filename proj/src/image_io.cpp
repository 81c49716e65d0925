#include "kiwi/image_io.hpp"

#include <png.h>

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

namespace kiwi {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  return f;
}

// Reads the next whitespace-delimited PPM header token, skipping comments.
int read_ppm_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (in && c != '\n') c = in.get();
    }
    c = in.get();
  }
  std::string digits;
  while (in && std::isdigit(c)) {
    digits.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (digits.empty()) throw Error(ErrorCode::parse, "malformed PPM header in '" + path.string() + "'");
  return std::stoi(digits);
}

ImageFrame read_ppm(const std::filesystem::path& path, Camera camera, double timestamp) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw Error(ErrorCode::parse, "'" + path.string() + "' is not a binary PPM");
  }
  const int width = read_ppm_int(in, path);
  const int height = read_ppm_int(in, path);
  const int maxval = read_ppm_int(in, path);
  if (maxval != 255) throw Error(ErrorCode::parse, "only 8-bit PPM is supported");
  ImageFrame frame(path.stem().string(), camera, width, height, timestamp);
  in.read(reinterpret_cast<char*>(frame.pixels.data()), static_cast<std::streamsize>(frame.pixels.size()));
  if (!in) throw Error(ErrorCode::parse, "truncated pixel data in '" + path.string() + "'");
  return frame;
}

ImageFrame read_png(const std::filesystem::path& path, Camera camera, double timestamp) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::parse, "cannot decode PNG '" + path.string() + "': " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageFrame frame(path.stem().string(), camera, static_cast<int>(image.width), static_cast<int>(image.height),
                   timestamp);
  if (!png_image_finish_read(&image, nullptr, frame.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::parse, "cannot decode PNG '" + path.string() + "': " + msg);
  }
  return frame;
}

}  // namespace

ImageFrame read_image(const std::filesystem::path& path, Camera camera, double timestamp) {
  std::array<unsigned char, 8> sig{};
  {
    auto f = open_file(path, "rb");
    if (std::fread(sig.data(), 1, sig.size(), f.get()) < 2) {
      throw Error(ErrorCode::parse, "'" + path.string() + "' is too short to be an image");
    }
  }
  if (png_sig_cmp(sig.data(), 0, sig.size()) == 0) return read_png(path, camera, timestamp);
  return read_ppm(path, camera, timestamp);
}

std::string encode_ppm(const ImageFrame& frame) {
  std::string out = "P6\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(frame.pixels.data()), frame.pixels.size());
  return out;
}

void write_ppm(const std::filesystem::path& path, const ImageFrame& frame) {
  auto f = open_file(path, "wb");
  std::fprintf(f.get(), "P6\n%d %d\n255\n", frame.width, frame.height);
  if (std::fwrite(frame.pixels.data(), 1, frame.pixels.size(), f.get()) != frame.pixels.size()) {
    throw Error(ErrorCode::io, "short write to '" + path.string() + "'");
  }
}

void write_png(const std::filesystem::path& path, const ImageFrame& frame) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, frame.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::io, "cannot write PNG '" + path.string() + "': " + image.message);
  }
}

void write_image(const std::filesystem::path& path, const ImageFrame& frame) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (path.extension() == ".png") {
    write_png(path, frame);
  } else {
    write_ppm(path, frame);
  }
}

}  // namespace kiwi
