#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace exnet {

/// 8-bit interleaved RGB image, row-major.
struct ImageBuf {
  static constexpr std::size_t channels = 3;

  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageBuf() = default;
  ImageBuf(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * channels, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }

  [[nodiscard]] bool empty() const noexcept { return pixels.empty(); }

  friend bool operator==(const ImageBuf&, const ImageBuf&) = default;
};

/// Decodes PNG or JPEG (sniffed from the file header) to RGB8. Grayscale,
/// palette, alpha and 16-bit inputs are converted. Throws DataError naming
/// the path on any failure.
ImageBuf read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Throws DataError on failure.
void write_png(const ImageBuf& image, const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centers and edge clamping.
ImageBuf resize_bilinear(const ImageBuf& image, std::size_t width, std::size_t height);

/// Rounds a [0,1] intensity to the nearest 8-bit level, clamping first.
std::uint8_t quantize(double v);

}  // namespace exnet
