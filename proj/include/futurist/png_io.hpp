#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace futurist {

struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> pixels;  // row-major
};

// Reads an 8- or 16-bit single-channel PNG. Throws LoadError naming the path.
GrayImage read_png_gray(const std::filesystem::path& path);
// 8-bit RGB; returns width·height·3 bytes. Throws LoadError.
std::vector<std::uint8_t> read_png_rgb(const std::filesystem::path& path, int& width, int& height);

void write_png_gray(const std::filesystem::path& path, const GrayImage& image);
// `rgb` holds width·height·3 bytes.
void write_png_rgb(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

}  // namespace futurist
