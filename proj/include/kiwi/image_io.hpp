#pragma once

#include <filesystem>
#include <string>

#include "kiwi/core.hpp"

namespace kiwi {

// Reads binary PPM (P6, maxval 255) or 8-bit PNG, chosen by file signature.
// The frame's image_id defaults to the file stem.
ImageFrame read_image(const std::filesystem::path& path, Camera camera = Camera::left, double timestamp = 0.0);

// Binary PPM bytes.
std::string encode_ppm(const ImageFrame& frame);

void write_ppm(const std::filesystem::path& path, const ImageFrame& frame);
void write_png(const std::filesystem::path& path, const ImageFrame& frame);

// Picks the encoder from the extension (.png, otherwise PPM).
void write_image(const std::filesystem::path& path, const ImageFrame& frame);

}  // namespace kiwi
