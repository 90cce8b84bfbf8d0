#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cnav {

/// 8-bit single-channel raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }
};

/// Reads a PNG of any color type and converts to 8-bit luma (ITU-R BT.601).
GrayImage read_png_gray(const std::filesystem::path& path);

/// Writes an 8-bit single-channel PNG.
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);

/// Packs interleaved RGB into luma.
GrayImage rgb_to_gray(int width, int height, const std::vector<std::uint8_t>& rgb);

}  // namespace cnav
