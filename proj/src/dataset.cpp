#include "egan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "egan/image_io.hpp"

namespace egan {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

void AttributeSchema::validate() const {
  if (names.empty()) throw std::invalid_argument("attribute schema must contain at least one attribute");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw std::invalid_argument("duplicate attribute name '" + n + "'");
}

std::optional<int> AttributeSchema::index_of(std::string_view name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<int>(it - names.begin());
}

AttributeTable parse_attribute_file(std::string_view text) {
  std::vector<std::pair<int, std::string_view>> lines;  // (1-based line number, content)
  int number = 0;
  for (std::size_t pos = 0; pos <= text.size();) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++number;
    if (!split_ws(line).empty()) lines.emplace_back(number, line);
    pos = end + 1;
  }
  if (lines.size() < 2) throw ParseError(0, "attribute file needs a count line and a header line");

  auto count_tokens = split_ws(lines[0].second);
  long declared = -1;
  if (count_tokens.size() != 1 ||
      std::from_chars(count_tokens[0].data(), count_tokens[0].data() + count_tokens[0].size(), declared).ec !=
          std::errc{} ||
      declared < 0)
    throw ParseError(lines[0].first, "expected a non-negative image count");

  AttributeTable table;
  for (auto name : split_ws(lines[1].second)) table.schema.names.emplace_back(name);
  try {
    table.schema.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(lines[1].first, e.what());
  }
  const std::size_t n_a = table.schema.names.size();

  for (std::size_t k = 2; k < lines.size(); ++k) {
    const auto [line_no, line] = lines[k];
    auto tokens = split_ws(line);
    if (tokens.size() != n_a + 1)
      throw ParseError(line_no, "expected " + std::to_string(n_a) + " attribute values, got " +
                                    std::to_string(tokens.size() - 1));
    std::vector<float> values(n_a);
    for (std::size_t i = 0; i < n_a; ++i) {
      const auto tok = tokens[i + 1];
      if (tok == "1") {
        values[i] = 1.0f;
      } else if (tok == "-1") {
        values[i] = 0.0f;
      } else {
        throw ParseError(line_no, "label '" + std::string(tok) + "' for " + table.schema.names[i] +
                                      " is not 1 or -1");
      }
    }
    std::string id(tokens[0]);
    if (!table.labels.emplace(id, std::move(values)).second) throw ParseError(line_no, "duplicate image id " + id);
    table.ids.push_back(std::move(id));
  }
  if (static_cast<long>(table.ids.size()) != declared)
    throw ParseError(0, "row count " + std::to_string(table.ids.size()) + " ≠ declared " + std::to_string(declared));
  return table;
}

std::string serialize_attribute_file(const AttributeTable& table) {
  std::ostringstream os;
  os << table.ids.size() << '\n';
  for (std::size_t i = 0; i < table.schema.names.size(); ++i) os << (i ? " " : "") << table.schema.names[i];
  os << '\n';
  for (const auto& id : table.ids) {
    os << id;
    for (float v : table.labels.at(id)) os << (v == 1.0f ? " 1" : " -1");
    os << '\n';
  }
  return os.str();
}

AttributeTable Dataset::attribute_table() const {
  AttributeTable t;
  t.schema = schema;
  for (const auto& img : images) {
    t.ids.push_back(img.id);
    t.labels[img.id] = img.attributes;
  }
  return t;
}

void SyntheticConfig::validate() const {
  if (resolution != 32 && resolution != 64)
    throw std::invalid_argument("synthetic: resolution must be 32 or 64, got " + std::to_string(resolution));
  if (n_images <= 0) throw std::invalid_argument("synthetic: n_images must be positive");
}

AttributeSchema synthetic::schema() {
  AttributeSchema s;
  for (auto n : kAttributeNames) s.names.emplace_back(n);
  return s;
}

Dataset generate_synthetic_dataset(const SyntheticConfig& config) {
  config.validate();
  using namespace synthetic;
  Dataset ds;
  ds.schema = synthetic::schema();
  ds.images.reserve(config.n_images);

  nn::Rng rng(config.seed);
  std::bernoulli_distribution coin(0.5);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  const int res = config.resolution;
  const double scale = res / 32.0;
  constexpr int kSuper = 4;

  for (int n = 0; n < config.n_images; ++n) {
    const bool red = coin(rng), large = coin(rng), border = coin(rng), bright = coin(rng);
    const bool circle = coin(rng);
    const double bg = bright ? uniform(0.70, 0.85) : uniform(0.10, 0.25);
    const double contrast = uniform(kShapeContrastMin, kShapeContrastMax);
    const double shape_level = bright ? bg - contrast : bg + contrast;
    const double border_level = bright ? bg - kBorderContrast : bg + kBorderContrast;
    const double cx = uniform(kCenterMin, kCenterMax) * scale;
    const double cy = uniform(kCenterMin, kCenterMax) * scale;
    const double radius =
        (large ? uniform(kLargeRadiusMin, kLargeRadiusMax) : uniform(kSmallRadiusMin, kSmallRadiusMax)) * scale;
    const double half_side = radius * std::sqrt(std::numbers::pi) / 2.0;  // equal-area square
    const double ring = kRingWidth * scale;

    LabeledImage img;
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", n);
    img.id = name;
    img.attributes = {red ? 1.0f : 0.0f, large ? 1.0f : 0.0f, border ? 1.0f : 0.0f, bright ? 1.0f : 0.0f};
    img.pixels = Tensor<float>({res, res, 3});

    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        double level;
        const double edge = std::min({x + 0.5, y + 0.5, res - x - 0.5, res - y - 0.5});
        if (border && edge < ring) {
          level = border_level;
        } else {
          int inside = 0;
          for (int sy = 0; sy < kSuper; ++sy)
            for (int sx = 0; sx < kSuper; ++sx) {
              const double px = x + (sx + 0.5) / kSuper - cx;
              const double py = y + (sy + 0.5) / kSuper - cy;
              const bool hit = circle ? px * px + py * py <= radius * radius
                                      : std::abs(px) <= half_side && std::abs(py) <= half_side;
              inside += hit;
            }
          const double cover = static_cast<double>(inside) / (kSuper * kSuper);
          level = cover * shape_level + (1.0 - cover) * bg;
        }
        double rgb[3] = {level, level, level};
        if (red) {
          rgb[0] += kTintRed;
          rgb[1] -= kTintRed / 2;
          rgb[2] -= kTintRed / 2;
        }
        for (int c = 0; c < 3; ++c) {
          const int byte = static_cast<int>(std::lround(std::clamp(rgb[c], 0.0, 1.0) * 255.0));
          img.pixels[(static_cast<std::size_t>(y) * res + x) * 3 + c] = image::normalize_byte(byte);
        }
      }
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

Batch make_batch(const Dataset& dataset, std::span<const int> indices) {
  if (dataset.images.empty()) throw std::invalid_argument("make_batch: empty dataset");
  const int m = static_cast<int>(indices.size());
  const int res = dataset.resolution();
  const int n_a = dataset.schema.count();
  Batch b;
  b.images = Tensor<float>({m, res, res, 3});
  b.attributes = Tensor<float>({m, n_a});
  const std::size_t stride = static_cast<std::size_t>(res) * res * 3;
  for (int k = 0; k < m; ++k) {
    const auto& img = dataset.images.at(static_cast<std::size_t>(indices[k]));
    if (img.pixels.size() != stride) throw DimensionError("make_batch: images differ in size");
    std::copy(img.pixels.values().begin(), img.pixels.values().end(), b.images.data() + k * stride);
    std::copy(img.attributes.begin(), img.attributes.end(), b.attributes.data() + static_cast<std::size_t>(k) * n_a);
    b.ids.push_back(img.id);
  }
  return b;
}

Batch sample_batch(const Dataset& dataset, int m, nn::Rng& rng) {
  const int n = dataset.size();
  if (m < 1 || m > n)
    throw std::invalid_argument("sample_batch: batch size " + std::to_string(m) + " exceeds dataset size " +
                                std::to_string(n));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < m; ++i) {
    const int j = std::uniform_int_distribution<int>(i, n - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  return make_batch(dataset, std::span<const int>(idx.data(), m));
}

Tensor<float> sample_random_attributes(int m, const AttributeSchema& schema, nn::Rng& rng) {
  if (m < 1) throw std::invalid_argument("sample_random_attributes: M must be at least 1");
  std::bernoulli_distribution coin(0.5);
  Tensor<float> out({m, schema.count()});
  for (auto& v : out.values()) v = coin(rng) ? 1.0f : 0.0f;
  return out;
}

Tensor<float> normalize_image(std::span<const int> raw, int height, int width) {
  if (raw.size() != static_cast<std::size_t>(height) * width * 3)
    throw DimensionError("normalize_image: expected " + std::to_string(height * width * 3) + " values");
  Tensor<float> out({height, width, 3});
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = image::normalize_byte(raw[i]);
  return out;
}

std::vector<int> denormalize_image(const Tensor<float>& pixels) {
  std::vector<int> out(pixels.size());
  std::transform(pixels.values().begin(), pixels.values().end(), out.begin(),
                 [](float v) { return static_cast<int>(image::denormalize_value(v)); });
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, int n_test) {
  if (n_test < 0 || n_test >= dataset.size())
    throw std::invalid_argument("split_dataset: held-out size must be in [0, dataset size)");
  Dataset train, test;
  train.schema = test.schema = dataset.schema;
  const int cut = dataset.size() - n_test;
  train.images.assign(dataset.images.begin(), dataset.images.begin() + cut);
  test.images.assign(dataset.images.begin() + cut, dataset.images.end());
  return {std::move(train), std::move(test)};
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  for (const auto& img : dataset.images) image::write_png(dir / "images" / img.id, image::to_rgb(img.pixels));
  std::ofstream f(dir / "list_attr.txt", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (dir / "list_attr.txt").string());
  f << serialize_attribute_file(dataset.attribute_table());
  if (!f) throw std::runtime_error("failed writing " + (dir / "list_attr.txt").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "list_attr.txt", std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + (dir / "list_attr.txt").string());
  std::stringstream ss;
  ss << f.rdbuf();
  AttributeTable table = parse_attribute_file(ss.str());
  Dataset ds;
  ds.schema = table.schema;
  for (const auto& id : table.ids) {
    LabeledImage img;
    img.id = id;
    const auto rgb = image::read_png(dir / "images" / id);
    if (rgb.width != rgb.height) throw std::runtime_error(id + ": images must be square");
    img.pixels = image::from_rgb(rgb);
    if (!ds.images.empty() && img.pixels.shape() != ds.images.front().pixels.shape())
      throw std::runtime_error(id + ": image size differs from the rest of the dataset");
    img.attributes = table.labels.at(id);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

}  // namespace egan
