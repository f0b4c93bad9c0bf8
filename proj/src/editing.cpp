#include "egan/editing.hpp"

#include <algorithm>
#include <cmath>

#include "egan/image_io.hpp"

namespace egan::editing {
namespace {

Tensor<float> as_batch(const ModelState& s, const Tensor<float>& images, const char* who) {
  Tensor<float> x = images.rank() == 3 ? images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)}) : images;
  const int r = s.config.resolution;
  if (x.rank() != 4 || x.dim(3) != 3 || x.dim(0) < 1)
    throw DimensionError(std::string(who) + ": expected M×H×W×3 images, got " + shape_string(images.shape()));
  if (x.dim(1) != r || x.dim(2) != r)
    throw DimensionError(std::string(who) + ": image is " + std::to_string(x.dim(1)) + "×" + std::to_string(x.dim(2)) +
                         " but the model works at " + std::to_string(r) + "×" + std::to_string(r));
  return x;
}

void check_attributes(const ModelState& s, const Tensor<float>& y, int m, const char* who) {
  if (y.shape() != Shape{m, s.config.n_a})
    throw DimensionError(std::string(who) + ": attributes " + shape_string(y.shape()) + ", expected " +
                         shape_string({m, s.config.n_a}));
  check_attribute_range(y);
}

// Applies f to each leading row of the inputs and stacks the results.
template <typename F>
Tensor<float> per_sample(int m, F&& f) {
  std::vector<Tensor<float>> rows;
  rows.reserve(m);
  for (int i = 0; i < m; ++i) rows.push_back(f(i));
  return concat_rows<float>(rows);
}

Tensor<float> invert_one(const ModelState& s, const Tensor<float>& x1, const Tensor<float>& y1) {
  const auto d = s.discriminator.forward(x1, nullptr);
  const auto c = s.classifier.forward(x1, nullptr);
  return s.connection.forward(d.features, c.features, y1, nullptr);
}

Tensor<float> source_attributes(const ModelState& s, const Tensor<float>& x, const Tensor<float>* given,
                                const char* who) {
  if (!given) return predict_attributes(s, x);
  check_attributes(s, *given, x.dim(0), who);
  return *given;
}

}  // namespace

void check_attribute_range(const Tensor<float>& y) {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!(y[i] >= -1.0f && y[i] <= 1.0f))
      throw AttributeRangeError("attribute value " + std::to_string(y[i]) + " outside [-1,1]");
}

Tensor<float> predict_attributes(const ModelState& s, const Tensor<float>& images) {
  const Tensor<float> x = as_batch(s, images, "predict_attributes");
  return per_sample(x.dim(0), [&](int i) {
    Tensor<float> logits = s.classifier.forward(x.rows(i, i + 1), nullptr).out;
    for (auto& v : logits.values()) v = v > 0.0f ? 1.0f : 0.0f;  // sigmoid(v) > 0.5
    return logits;
  });
}

Tensor<float> invert_image(const ModelState& s, const Tensor<float>& images, const Tensor<float>* attributes) {
  const Tensor<float> x = as_batch(s, images, "invert_image");
  const Tensor<float> y = source_attributes(s, x, attributes, "invert_image");
  return per_sample(x.dim(0), [&](int i) { return invert_one(s, x.rows(i, i + 1), y.rows(i, i + 1)); });
}

Tensor<float> generate_novel(const ModelState& s, const Tensor<float>& z, const Tensor<float>& attributes) {
  if (z.rank() != 2 || z.dim(1) != s.config.d_z)
    throw DimensionError("generate: z " + shape_string(z.shape()) + ", expected M×" + std::to_string(s.config.d_z));
  check_attributes(s, attributes, z.dim(0), "generate");
  return per_sample(z.dim(0), [&](int i) { return s.generator.forward(z.rows(i, i + 1), attributes.rows(i, i + 1), nullptr); });
}

Tensor<float> generate_novel(const ModelState& s, nn::Rng& rng, const Tensor<float>& attributes) {
  if (attributes.rank() != 2) throw DimensionError("generate: attributes must be M×n_a");
  return generate_novel(s, sample_latent<float>(attributes.dim(0), s.config.d_z, rng), attributes);
}

Tensor<float> reconstruct(const ModelState& s, const Tensor<float>& images, const Tensor<float>* attributes) {
  const Tensor<float> x = as_batch(s, images, "reconstruct");
  const Tensor<float> y = source_attributes(s, x, attributes, "reconstruct");
  return edit_attributes(s, x, y, &y);
}

Tensor<float> edit_attributes(const ModelState& s, const Tensor<float>& images, const Tensor<float>& target,
                              const Tensor<float>* source) {
  const Tensor<float> x = as_batch(s, images, "edit");
  check_attributes(s, target, x.dim(0), "edit");
  const Tensor<float> y = source_attributes(s, x, source, "edit");
  return per_sample(x.dim(0), [&](int i) {
    const Tensor<float> z = invert_one(s, x.rows(i, i + 1), y.rows(i, i + 1));
    return s.generator.forward(z, target.rows(i, i + 1), nullptr);
  });
}

Tensor<float> attribute_strength(const ModelState& s, const Tensor<float>& images, int attribute, float value,
                                 const Tensor<float>* source) {
  if (attribute < 0 || attribute >= s.config.n_a)
    throw AttributeRangeError("attribute index " + std::to_string(attribute) + " outside the schema");
  if (!(value >= -1.0f && value <= 1.0f))
    throw AttributeRangeError("attribute value " + std::to_string(value) + " outside [-1,1]");
  const Tensor<float> x = as_batch(s, images, "attribute_strength");
  const Tensor<float> y = source_attributes(s, x, source, "attribute_strength");
  Tensor<float> target = y;
  for (int i = 0; i < x.dim(0); ++i) target[static_cast<std::size_t>(i) * s.config.n_a + attribute] = value;
  return edit_attributes(s, x, target, &y);
}

Tensor<float> interpolate(const ModelState& s, const std::vector<float>& z_a, const std::vector<float>& y_a,
                          const std::vector<float>& z_b, const std::vector<float>& y_b, int steps) {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be at least 2");
  const int dz = s.config.d_z, na = s.config.n_a;
  if (static_cast<int>(z_a.size()) != dz || static_cast<int>(z_b.size()) != dz)
    throw DimensionError("interpolate: latent vectors must have length " + std::to_string(dz));
  if (static_cast<int>(y_a.size()) != na || static_cast<int>(y_b.size()) != na)
    throw DimensionError("interpolate: attribute vectors must have length " + std::to_string(na));
  check_attribute_range(Tensor<float>({na}, y_a));
  check_attribute_range(Tensor<float>({na}, y_b));
  return per_sample(steps, [&](int k) {
    const float t = static_cast<float>(k) / static_cast<float>(steps - 1);
    Tensor<float> z({1, dz}), y({1, na});
    for (int j = 0; j < dz; ++j) z[j] = (1.0f - t) * z_a[j] + t * z_b[j];
    for (int j = 0; j < na; ++j) y[j] = (1.0f - t) * y_a[j] + t * y_b[j];
    return s.generator.forward(z, y, nullptr);
  });
}

LatentDirection estimate_direction(const ModelState& s, const Tensor<float>& images_a, const Tensor<float>& images_b,
                                   const Tensor<float>* attributes_a, const Tensor<float>* attributes_b,
                                   std::string label) {
  const Tensor<float> za = invert_image(s, images_a, attributes_a);
  const Tensor<float> zb = invert_image(s, images_b, attributes_b);
  const int dz = s.config.d_z;
  LatentDirection d{std::vector<float>(dz, 0.0f), std::move(label)};
  auto column_mean = [dz](const Tensor<float>& z, int j) {
    double sum = 0;
    for (int i = 0; i < z.dim(0); ++i) sum += z[static_cast<std::size_t>(i) * dz + j];
    return sum / z.dim(0);
  };
  for (int j = 0; j < dz; ++j) d.values[j] = static_cast<float>(column_mean(za, j) - column_mean(zb, j));
  return d;
}

Tensor<float> apply_direction(const ModelState& s, const Tensor<float>& images, const LatentDirection& direction,
                              float coefficient, const Tensor<float>* attributes) {
  if (static_cast<int>(direction.values.size()) != s.config.d_z)
    throw DimensionError("apply_direction: direction has length " + std::to_string(direction.values.size()));
  const Tensor<float> x = as_batch(s, images, "apply_direction");
  const Tensor<float> y = source_attributes(s, x, attributes, "apply_direction");
  return per_sample(x.dim(0), [&](int i) {
    Tensor<float> z = invert_one(s, x.rows(i, i + 1), y.rows(i, i + 1));
    for (int j = 0; j < s.config.d_z; ++j) z[j] = std::clamp(z[j] + coefficient * direction.values[j], -1.0f, 1.0f);
    return s.generator.forward(z, y.rows(i, i + 1), nullptr);
  });
}

Tensor<float> pose_walk(const ModelState& s, const Tensor<float>& image, int steps, const std::vector<float>* attributes,
                        FlipAxis axis) {
  if (steps < 2) throw std::invalid_argument("pose_walk: steps must be at least 2");
  const Tensor<float> x = as_batch(s, image, "pose_walk");
  if (x.dim(0) != 1) throw DimensionError("pose_walk: expects a single image");
  const Tensor<float> mirrored = image::flip(x.row(0), axis == FlipAxis::horizontal);
  Tensor<float> y;
  if (attributes) {
    y = Tensor<float>({1, s.config.n_a}, *attributes);
    check_attributes(s, y, 1, "pose_walk");
  } else {
    y = predict_attributes(s, x);
  }
  const Tensor<float> z0 = invert_image(s, x, &y);
  const Tensor<float> z1 = invert_image(s, mirrored, &y);
  return interpolate(s, z0.storage(), y.storage(), z1.storage(), y.storage(), steps);
}

}  // namespace egan::editing
