#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

// PNG (8 or 16 bit, gray/RGB/alpha) or JPEG, converted to RGB in [0,1].
// The image id is the file stem.
Image read_image(const std::filesystem::path& path);

// tEXt chunks (keyword, value) stored with the image.
using PngText = std::vector<std::pair<std::string, std::string>>;

// Lossless 16-bit RGB PNG. Written to a temporary file and renamed.
void write_png16(const Image& image, const std::filesystem::path& path, const PngText& text = {});
// 8-bit RGB PNG export (quantizes).
void write_png8(const Image& image, const std::filesystem::path& path, const PngText& text = {});

// Round trip through n-bit quantization without touching the disk.
Image quantize(const Image& image, int bits);

}  // namespace tma
