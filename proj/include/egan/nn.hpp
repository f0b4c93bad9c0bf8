#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "egan/tensor.hpp"

namespace egan::nn {

using Rng = std::mt19937_64;

template <typename T>
struct Trace;

/// Values a layer keeps from its forward pass for use in backward.
template <typename T>
struct LayerCache {
  Shape input_shape;
  std::vector<Tensor<T>> saved;
  std::vector<Trace<T>> nested;
};

template <typename T>
struct Trace {
  std::vector<LayerCache<T>> layers;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  /// A null cache means inference: nothing is retained.
  virtual Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const = 0;

  /// Accumulates (+=) parameter gradients into `grads` (one entry per params()
  /// tensor, or empty to skip) and returns the input gradient when requested.
  virtual Tensor<T> backward(const Tensor<T>& grad_out, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                             bool need_input_grad) const = 0;

  virtual std::vector<Tensor<T>*> params() { return {}; }
  virtual std::vector<const Tensor<T>*> params() const { return {}; }
  virtual std::vector<std::string> param_names() const { return {}; }
  virtual void init(Rng&) {}

  /// Appends the on/off state of every non-differentiable point crossed in the
  /// forward pass. Used by gradient audits to reject finite-difference probes
  /// that straddle a kink.
  virtual void kink_pattern(const LayerCache<T>&, std::vector<bool>&) const {}
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out);
  std::string kind() const override { return "linear"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::vector<Tensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Tensor<T>*> params() const override { return {&weight_, &bias_}; }
  std::vector<std::string> param_names() const override { return {"weight", "bias"}; }
  void init(Rng& rng) override;

 private:
  int in_, out_;
  Tensor<T> weight_;  // out × in
  Tensor<T> bias_;
};

/// Spatial geometry of a convolution from the input side.
struct ConvGeometry {
  int in_h, in_w, channels, kernel, stride, pad, out_h, out_w;
};

template <typename T>
void im2col(const T* x, int batch, const ConvGeometry& g, T* cols);
template <typename T>
void col2im(const T* cols, int batch, const ConvGeometry& g, T* x);

/// NHWC convolution via im2col. Weight layout: (k·k·Cin) × Cout.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad);
  std::string kind() const override { return "conv2d"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::vector<Tensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Tensor<T>*> params() const override { return {&weight_, &bias_}; }
  std::vector<std::string> param_names() const override { return {"weight", "bias"}; }
  void init(Rng& rng) override;

 private:
  ConvGeometry geometry(const Shape& input) const;
  int cin_, cout_, k_, s_, p_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

/// NHWC transposed convolution. Weight layout: Cin × (k·k·Cout).
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad);
  std::string kind() const override { return "conv_transpose2d"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ConvTranspose2d>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::vector<Tensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<const Tensor<T>*> params() const override { return {&weight_, &bias_}; }
  std::vector<std::string> param_names() const override { return {"weight", "bias"}; }
  void init(Rng& rng) override;

 private:
  ConvGeometry geometry(const Shape& input) const;
  int cin_, cout_, k_, s_, p_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class LeakyReLU final : public Layer<T> {
 public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<LeakyReLU>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  void kink_pattern(const LayerCache<T>& cache, std::vector<bool>& out) const override;

 private:
  T slope_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  std::string kind() const override { return "tanh"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Tanh>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  std::string kind() const override { return "sigmoid"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Sigmoid>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
};

/// Per-position normalization over the channel (last) axis: x / sqrt(mean(x²) + eps).
/// Acts on each sample independently, so batched and per-sample passes agree.
template <typename T>
class PixelNorm final : public Layer<T> {
 public:
  std::string kind() const override { return "pixel_norm"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<PixelNorm>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
};

/// Reshapes each sample; the leading (batch) dimension is preserved.
template <typename T>
class Reshape final : public Layer<T> {
 public:
  explicit Reshape(Shape per_sample) : per_sample_(std::move(per_sample)) {}
  std::string kind() const override { return "reshape"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Reshape>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;

 private:
  Shape per_sample_;
};

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Sequential& add(std::unique_ptr<Layer<T>> layer);
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  std::size_t depth() const noexcept { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor<T> forward(const Tensor<T>& x, Trace<T>* trace) const;
  /// `grads` may be null when only the input gradient is needed.
  Tensor<T> backward(const Tensor<T>& grad_out, const Trace<T>& trace, std::vector<Tensor<T>>* grads,
                     bool need_input_grad = true) const;

  std::vector<Tensor<T>*> params();
  std::vector<const Tensor<T>*> params() const;
  std::vector<std::string> param_names() const;
  std::vector<Tensor<T>> zero_grads() const;
  std::size_t param_count() const;
  void init(Rng& rng);

  void kink_pattern(const Trace<T>& trace, std::vector<bool>& out) const;

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// y = act(x + body(x)); shapes of x and body(x) must agree.
template <typename T>
class Residual final : public Layer<T> {
 public:
  Residual(Sequential<T> body, T slope) : body_(std::move(body)), act_(slope) {}
  std::string kind() const override { return "residual"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Residual>(*this); }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override;
  Tensor<T> backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override;
  std::vector<Tensor<T>*> params() override { return body_.params(); }
  std::vector<const Tensor<T>*> params() const override {
    return static_cast<const Sequential<T>&>(body_).params();
  }
  std::vector<std::string> param_names() const override { return body_.param_names(); }
  void init(Rng& rng) override { body_.init(rng); }
  void kink_pattern(const LayerCache<T>& cache, std::vector<bool>& out) const override;

 private:
  Sequential<T> body_;
  LeakyReLU<T> act_;
};

/// First and second moment estimates for one network.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
AdamState<T> make_adam_state(const Sequential<T>& net);

template <typename T>
void adam_update(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
                 const AdamConfig& config);

}  // namespace egan::nn
