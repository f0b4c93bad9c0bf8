#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "egan/models.hpp"

namespace egan::editing {

/// An attribute value outside [-1,1] or an index outside the schema.
class AttributeRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

enum class FlipAxis { horizontal, vertical };

struct LatentDirection {
  std::vector<float> values;  // length d_z
  std::string label;
};

// Images are M×H×W×3 (a single H×W×3 image is accepted everywhere and treated
// as M = 1). Every operation runs sample by sample, so results do not depend on
// how requests are batched.

/// Classifier C at threshold 0.5; M×n_a in {0,1}.
Tensor<float> predict_attributes(const ModelState& state, const Tensor<float>& images);

/// z̃ = C_n(f_d(x), f_c(x), y); y defaults to predict_attributes(x).
Tensor<float> invert_image(const ModelState& state, const Tensor<float>& images,
                           const Tensor<float>* attributes = nullptr);

/// G(z, y) with y entries in [-1,1]; outputs M×H×W×3.
Tensor<float> generate_novel(const ModelState& state, const Tensor<float>& z, const Tensor<float>& attributes);
Tensor<float> generate_novel(const ModelState& state, nn::Rng& rng, const Tensor<float>& attributes);

Tensor<float> reconstruct(const ModelState& state, const Tensor<float>& images,
                          const Tensor<float>* attributes = nullptr);

/// G(invert(x, y_src), y_target). y_src defaults to the classifier's prediction.
Tensor<float> edit_attributes(const ModelState& state, const Tensor<float>& images, const Tensor<float>& target,
                              const Tensor<float>* source = nullptr);

/// Edit that sets one entry of the source vector to `value` and keeps the rest.
Tensor<float> attribute_strength(const ModelState& state, const Tensor<float>& images, int attribute, float value,
                                 const Tensor<float>* source = nullptr);

/// Frames for t = k/(steps-1), k = 0..steps-1:
/// G((1-t) z_a + t z_b, (1-t) y_a + t y_b). Returns steps×H×W×3.
Tensor<float> interpolate(const ModelState& state, const std::vector<float>& z_a, const std::vector<float>& y_a,
                          const std::vector<float>& z_b, const std::vector<float>& y_b, int steps);

/// mean(invert(a)) - mean(invert(b)).
LatentDirection estimate_direction(const ModelState& state, const Tensor<float>& images_a,
                                   const Tensor<float>& images_b, const Tensor<float>* attributes_a = nullptr,
                                   const Tensor<float>* attributes_b = nullptr, std::string label = {});

/// G(clamp(invert(x, y) + coefficient·d, -1, 1), y).
Tensor<float> apply_direction(const ModelState& state, const Tensor<float>& images, const LatentDirection& direction,
                              float coefficient, const Tensor<float>* attributes = nullptr);

/// Walk from invert(x, y) to invert(flip(x), y) with y fixed. x is a single
/// image; returns steps×H×W×3.
Tensor<float> pose_walk(const ModelState& state, const Tensor<float>& image, int steps,
                        const std::vector<float>* attributes = nullptr, FlipAxis axis = FlipAxis::horizontal);

/// Throws AttributeRangeError unless every entry lies in [-1,1].
void check_attribute_range(const Tensor<float>& attributes);

}  // namespace egan::editing
