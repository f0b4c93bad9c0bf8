#include "egan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace egan::image {

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw ImageError("encode_png: inconsistent image dimensions");
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw ImageError(std::string("encode_png: ") + desc.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw ImageError(std::string("encode_png: ") + desc.message);
  out.resize(size);
  return out;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()))
    throw ImageError(std::string("decode_png: ") + (bytes.empty() ? "empty input" : desc.message));
  desc.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(desc.width);
  out.height = static_cast<int>(desc.height);
  out.pixels.resize(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = desc.message;
    png_image_free(&desc);
    throw ImageError("decode_png: " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  const auto bytes = encode_png(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ImageError("failed writing " + path.string());
}

RgbImage read_png(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const ImageError& e) {
    throw ImageError(path.string() + ": " + e.what());
  }
}

float normalize_byte(int value) {
  if (value < 0 || value > 255) throw std::out_of_range("pixel value " + std::to_string(value) + " outside [0,255]");
  return static_cast<float>(value) / 127.5f - 1.0f;
}

std::uint8_t denormalize_value(float value) {
  const float v = std::round((value + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
}

RgbImage to_rgb(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("to_rgb: expected H×W×3, got " + shape_string(image.shape()));
  RgbImage out{image.dim(1), image.dim(0), std::vector<std::uint8_t>(image.size())};
  std::transform(image.values().begin(), image.values().end(), out.pixels.begin(), denormalize_value);
  return out;
}

Tensor<float> from_rgb(const RgbImage& image) {
  Tensor<float> out({image.height, image.width, 3});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out[i] = normalize_byte(image.pixels[i]);
  return out;
}

RgbImage make_grid(std::span<const RgbImage> cells, int columns, int padding) {
  if (cells.empty()) throw ImageError("make_grid: no images");
  const int w = cells.front().width, h = cells.front().height;
  for (const auto& c : cells)
    if (c.width != w || c.height != h) throw ImageError("make_grid: images differ in size");
  columns = std::max(1, std::min<int>(columns, static_cast<int>(cells.size())));
  const int rows = (static_cast<int>(cells.size()) + columns - 1) / columns;
  RgbImage out;
  out.width = columns * w + (columns + 1) * padding;
  out.height = rows * h + (rows + 1) * padding;
  out.pixels.assign(static_cast<std::size_t>(out.width) * out.height * 3, 0);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const int x0 = padding + static_cast<int>(k % columns) * (w + padding);
    const int y0 = padding + static_cast<int>(k / columns) * (h + padding);
    for (int y = 0; y < h; ++y)
      std::copy_n(cells[k].pixels.data() + static_cast<std::size_t>(y) * w * 3, w * 3,
                  out.pixels.data() + (static_cast<std::size_t>(y0 + y) * out.width + x0) * 3);
  }
  return out;
}

Tensor<float> flip(const Tensor<float>& image, bool horizontal) {
  if (image.rank() != 3) throw DimensionError("flip: expected H×W×C, got " + shape_string(image.shape()));
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor<float> out(image.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = horizontal ? y : h - 1 - y;
      const int sx = horizontal ? w - 1 - x : x;
      std::copy_n(image.data() + (static_cast<std::size_t>(sy) * w + sx) * c, c,
                  out.data() + (static_cast<std::size_t>(y) * w + x) * c);
    }
  return out;
}

}  // namespace egan::image
