#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "egan/tensor.hpp"

namespace egan::image {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const RgbImage&) const = default;
};

std::vector<std::uint8_t> encode_png(const RgbImage& image);
/// Any PNG colour type is converted to 8-bit RGB.
RgbImage decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

/// x ↦ x / 127.5 - 1.
float normalize_byte(int value);
/// Inverse of normalize_byte, rounding to nearest and clamping to [0,255].
std::uint8_t denormalize_value(float value);

/// H×W×3 tensor in [-1,1] → bytes.
RgbImage to_rgb(const Tensor<float>& image);
/// Bytes → H×W×3 tensor in [-1,1].
Tensor<float> from_rgb(const RgbImage& image);

/// Lays images out row by row with `padding` pixels of black between cells.
RgbImage make_grid(std::span<const RgbImage> cells, int columns, int padding = 2);

/// Mirrors an H×W×3 tensor; horizontal (left-right) by default.
Tensor<float> flip(const Tensor<float>& image, bool horizontal = true);

}  // namespace egan::image
