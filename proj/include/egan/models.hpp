#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "egan/nn.hpp"
#include "egan/tensor.hpp"

namespace egan {

/// Sizes of the four networks. Depth of the conv stacks is log2(resolution) - 2.
struct NetworkConfig {
  int d_z = 100;
  int n_a = 4;
  int resolution = 32;
  int g_channels = 256;  // width at the 4x4 stage; halves per upsampling block
  int d_channels = 32;   // width after the first conv; doubles per block
  int c_channels = 32;
  int f_d = 512;
  int f_c = 512;
  int cn_hidden = 512;
  int cn_layers = 2;
  double leaky_slope = 0.2;

  int depth() const;
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

enum class Network { generator, discriminator, classifier, connection };
inline constexpr std::array<Network, 4> kAllNetworks = {Network::generator, Network::discriminator,
                                                       Network::classifier, Network::connection};
std::string_view network_name(Network n);

/// Generator G(z, y): y is concatenated to z at the input only.
template <typename T>
class GeneratorT {
 public:
  struct InputGrads {
    Tensor<T> z;
    Tensor<T> y;
  };

  GeneratorT() = default;
  explicit GeneratorT(const NetworkConfig& config);

  /// z: M×d_z, y: M×n_a → images M×H×W×3 in (-1,1).
  Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& y, nn::Trace<T>* trace) const;
  InputGrads backward(const Tensor<T>& grad_images, const nn::Trace<T>& trace, std::vector<Tensor<T>>* grads,
                      bool need_input_grad = false) const;

  nn::Sequential<T>& net() { return net_; }
  const nn::Sequential<T>& net() const { return net_; }

 private:
  int d_z_ = 0, n_a_ = 0;
  nn::Sequential<T> net_;
};

/// A conv trunk ending in a hidden feature vector, followed by an output head.
/// Used for D (head: 1 unit + sigmoid), C (head: n_a logits) and the
/// evaluation classifier.
template <typename T>
class FeatureNetT {
 public:
  struct Output {
    Tensor<T> out;       // M×k head output
    Tensor<T> features;  // M×f last hidden representation
  };
  struct Trace {
    nn::Trace<T> trunk;
    nn::Trace<T> head;
  };

  FeatureNetT() = default;
  FeatureNetT(nn::Sequential<T> trunk, nn::Sequential<T> head, int image_size);

  Output forward(const Tensor<T>& x, Trace* trace) const;
  /// grad_features may be null (no gradient enters through the feature tap).
  Tensor<T> backward(const Tensor<T>& grad_out, const Tensor<T>* grad_features, const Trace& trace,
                     std::vector<Tensor<T>>* grads, bool need_input_grad) const;

  std::vector<Tensor<T>*> params();
  std::vector<const Tensor<T>*> params() const;
  std::vector<std::string> param_names() const;
  std::vector<Tensor<T>> zero_grads() const;
  std::size_t param_count() const;
  void init(nn::Rng& rng);
  void kink_pattern(const Trace& trace, std::vector<bool>& out) const;

 private:
  nn::Sequential<T> trunk_;
  nn::Sequential<T> head_;
  int image_size_ = 0;
};

template <typename T>
FeatureNetT<T> make_discriminator(const NetworkConfig& config);
template <typename T>
FeatureNetT<T> make_classifier(const NetworkConfig& config);

/// C_n: (f_d ⊕ f_c ⊕ y) → z̃ in (-1,1)^d_z.
template <typename T>
class ConnectionNetT {
 public:
  ConnectionNetT() = default;
  explicit ConnectionNetT(const NetworkConfig& config);

  Tensor<T> forward(const Tensor<T>& f_d, const Tensor<T>& f_c, const Tensor<T>& y, nn::Trace<T>* trace) const;
  void backward(const Tensor<T>& grad_z, const nn::Trace<T>& trace, std::vector<Tensor<T>>* grads) const;

  nn::Sequential<T>& net() { return net_; }
  const nn::Sequential<T>& net() const { return net_; }

 private:
  int f_d_ = 0, f_c_ = 0, n_a_ = 0;
  nn::Sequential<T> net_;
};

/// Parameters of G, D, C and C_n with their optimizer moments, the step
/// counter and the training RNG.
template <typename T>
struct ModelStateT {
  NetworkConfig config;
  GeneratorT<T> generator;
  FeatureNetT<T> discriminator;
  FeatureNetT<T> classifier;
  ConnectionNetT<T> connection;
  std::array<nn::AdamState<T>, 4> optimizer;  // indexed by Network
  std::int64_t step = 0;
  nn::Rng rng;

  std::vector<Tensor<T>*> params(Network n);
  std::vector<const Tensor<T>*> params(Network n) const;
  std::vector<std::string> param_names(Network n) const;
  nn::AdamState<T>& adam(Network n) { return optimizer[static_cast<std::size_t>(n)]; }
  const nn::AdamState<T>& adam(Network n) const { return optimizer[static_cast<std::size_t>(n)]; }

  bool all_finite() const;

  template <typename U>
  ModelStateT<U> cast() const;
};

using ModelState = ModelStateT<float>;
using Generator = GeneratorT<float>;
using FeatureNet = FeatureNetT<float>;
using ConnectionNet = ConnectionNetT<float>;

/// Builds all four networks with fan-in scaled weights and zero biases.
template <typename T = float>
ModelStateT<T> init_params(const NetworkConfig& config, std::uint64_t seed);

/// Discriminator outputs flattened: realness probabilities (M) plus f_d.
struct Discrimination {
  Tensor<float> score;
  Tensor<float> f_d;
};
struct Classification {
  Tensor<float> logits;
  Tensor<float> f_c;
};

Tensor<float> generator_forward(const ModelState& state, const Tensor<float>& z, const Tensor<float>& y);
Discrimination discriminator_forward(const ModelState& state, const Tensor<float>& images);
Classification classifier_forward(const ModelState& state, const Tensor<float>& images);
Tensor<float> connection_forward(const ModelState& state, const Tensor<float>& f_d, const Tensor<float>& f_c,
                                 const Tensor<float>& y);

/// Draws an M×d_z matrix from U[-1,1].
template <typename T = float>
Tensor<T> sample_latent(int m, int d_z, nn::Rng& rng);

}  // namespace egan
