#pragma once

#include <cstdint>
#include <vector>

#include "egan/tensor.hpp"

namespace egan::losses {

/// Clamp applied to every log argument.
inline constexpr double kLogEpsilon = 1e-7;

/// Per-attribute positive/negative weights for one batch:
/// w_p = M / (2 N), w_n = M / (2 (M - N)), N = positives in the batch.
/// When N == 0 or N == M the undefined weight is 0 and the other is 1.
struct SelectiveWeights {
  std::vector<double> w_p;
  std::vector<double> w_n;
  std::vector<int> positives;  // N_i
  int batch = 0;               // M
};

/// All returned losses are to be minimized.
struct LossReport {
  double discriminator = 0;       // L_D (negated maximization objective)
  double classifier = 0;          // L_C on real images
  double adversarial = 0;         // L_adv (non-saturating)
  double gen_attr_real = 0;       // L_Gce_a
  double gen_attr_random = 0;     // L_Gce_ã
  double connection = 0;          // L_Cn
  double generator_total = 0;     // L_adv + λ_a L_Gce_a + λ_ã L_Gce_ã

  bool all_finite() const;
};

/// Value of a loss together with its gradient w.r.t. the named input.
template <typename T>
struct Differentiated {
  double value = 0;
  Tensor<T> grad;
};

template <typename T>
SelectiveWeights selective_weights(const Tensor<T>& labels);

/// Σ over attributes, mean over batch, of weighted BCE on sigmoid(logits).
template <typename T>
double attribute_loss(const Tensor<T>& logits, const Tensor<T>& labels, const SelectiveWeights& weights);
/// Gradient is w.r.t. the logits.
template <typename T>
Differentiated<T> attribute_loss_grad(const Tensor<T>& logits, const Tensor<T>& labels,
                                      const SelectiveWeights& weights);

/// Same contract as attribute_loss, evaluated on classifier outputs for generated images.
template <typename T>
double generator_attribute_loss(const Tensor<T>& logits_on_fake, const Tensor<T>& targets,
                                const SelectiveWeights& weights) {
  return attribute_loss(logits_on_fake, targets, weights);
}

/// -mean(log d_real) - mean(log(1 - d_fake)).
template <typename T>
double discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake);
template <typename T>
struct DiscriminatorGrad {
  double value = 0;
  Tensor<T> grad_real;
  Tensor<T> grad_fake;
};
template <typename T>
DiscriminatorGrad<T> discriminator_loss_grad(const Tensor<T>& d_real, const Tensor<T>& d_fake);

/// Non-saturating form: -mean(log d_fake).
template <typename T>
double generator_adversarial_loss(const Tensor<T>& d_fake);
template <typename T>
Differentiated<T> generator_adversarial_loss_grad(const Tensor<T>& d_fake);

/// mean |z - z̃| over batch and coordinates.
template <typename T>
double connection_loss(const Tensor<T>& z, const Tensor<T>& z_tilde);
/// Gradient is w.r.t. z̃.
template <typename T>
Differentiated<T> connection_loss_grad(const Tensor<T>& z, const Tensor<T>& z_tilde);

inline double combine_generator_loss(double adversarial, double attr_real, double attr_random, double lambda_a = 1.0,
                                     double lambda_at = 1.0) {
  return adversarial + lambda_a * attr_real + lambda_at * attr_random;
}

}  // namespace egan::losses
