#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "egan/nn.hpp"
#include "egan/tensor.hpp"

namespace egan {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& message)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct AttributeSchema {
  std::vector<std::string> names;

  int count() const noexcept { return static_cast<int>(names.size()); }
  /// Throws if names are empty or repeated.
  void validate() const;
  std::optional<int> index_of(std::string_view name) const;
  bool operator==(const AttributeSchema&) const = default;
};

/// Contents of a CelebA-style attribute list with labels recoded to {0,1}.
struct AttributeTable {
  AttributeSchema schema;
  std::vector<std::string> ids;                          // file order
  std::map<std::string, std::vector<float>> labels;      // id → attribute vector
};

/// Line 1: image count. Line 2: attribute names. Then "<file> <±1 per attribute>".
AttributeTable parse_attribute_file(std::string_view text);
/// Writes the same layout back with 0/1 mapped to -1/1.
std::string serialize_attribute_file(const AttributeTable& table);

struct LabeledImage {
  std::string id;
  Tensor<float> pixels;            // H×W×3 in [-1,1]
  std::vector<float> attributes;   // length n_a, binary
};

struct Dataset {
  AttributeSchema schema;
  std::vector<LabeledImage> images;

  int size() const noexcept { return static_cast<int>(images.size()); }
  int resolution() const { return images.empty() ? 0 : images.front().pixels.dim(0); }
  AttributeTable attribute_table() const;
};

struct Batch {
  Tensor<float> images;      // M×H×W×3
  Tensor<float> attributes;  // M×n_a
  std::vector<std::string> ids;

  int size() const { return images.empty() ? 0 : images.dim(0); }
};

struct SyntheticConfig {
  int resolution = 32;
  int n_images = 5000;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Geometry and intensity levels of the synthetic family, in [0,1] units and
/// 32-pixel coordinates (scaled by resolution/32).
namespace synthetic {
inline constexpr std::string_view kAttributeNames[] = {"red_tint", "large_shape", "border", "bright_background"};
inline constexpr int kRedTint = 0, kLargeShape = 1, kBorder = 2, kBrightBackground = 3;
inline constexpr double kRingWidth = 2.0;      // border ring, from each edge
inline constexpr double kReferenceEnd = 4.0;   // reference band is [ring, 4) from each edge
inline constexpr double kTintRed = 0.15;       // added to R; half of it removed from G and B
inline constexpr double kBorderContrast = 0.5;
inline constexpr double kShapeContrastMin = 0.45, kShapeContrastMax = 0.6;
inline constexpr double kLargeRadiusMin = 7.0, kLargeRadiusMax = 8.0;
inline constexpr double kSmallRadiusMin = 3.5, kSmallRadiusMax = 4.5;
inline constexpr double kCenterMin = 13.0, kCenterMax = 19.0;
AttributeSchema schema();
}  // namespace synthetic

/// One shape on a plain background; the four attributes are independent
/// Bernoulli(0.5) draws. Pixels are quantized to the 8-bit grid.
Dataset generate_synthetic_dataset(const SyntheticConfig& config);

/// Uniform sampling without replacement within the batch.
Batch sample_batch(const Dataset& dataset, int m, nn::Rng& rng);
Batch make_batch(const Dataset& dataset, std::span<const int> indices);
/// M×n_a matrix of independent Bernoulli(0.5) draws.
Tensor<float> sample_random_attributes(int m, const AttributeSchema& schema, nn::Rng& rng);

/// Maps raw bytes (H×W×3) to [-1,1]; throws on values outside [0,255].
Tensor<float> normalize_image(std::span<const int> raw, int height, int width);
std::vector<int> denormalize_image(const Tensor<float>& pixels);

/// Splits off the last n_test images as a held-out set.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, int n_test);

/// Directory of PNG images (images/<id>) plus list_attr.txt.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace egan
