#include "egan/models.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace egan {

int NetworkConfig::depth() const { return std::bit_width(static_cast<unsigned>(resolution)) - 1 - 2; }

void NetworkConfig::validate() const {
  if (resolution != 32 && resolution != 64)
    throw std::invalid_argument("network: resolution must be 32 or 64, got " + std::to_string(resolution));
  const int dims[] = {d_z, n_a, g_channels, d_channels, c_channels, f_d, f_c, cn_hidden, cn_layers};
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("network: all dimensions must be positive");
  if (g_channels >> (depth() - 1) < 1)
    throw std::invalid_argument("network: g_channels too small for the upsampling depth");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw std::invalid_argument("network: leaky_slope outside [0,1)");
}

std::string_view network_name(Network n) {
  switch (n) {
    case Network::generator: return "G";
    case Network::discriminator: return "D";
    case Network::classifier: return "C";
    case Network::connection: return "Cn";
  }
  return "?";
}

// ---------------------------------------------------------------- Generator

template <typename T>
GeneratorT<T>::GeneratorT(const NetworkConfig& config) : d_z_(config.d_z), n_a_(config.n_a) {
  config.validate();
  const T slope = static_cast<T>(config.leaky_slope);
  int c = config.g_channels;
  net_.template emplace<nn::Linear<T>>(config.d_z + config.n_a, 4 * 4 * c);
  net_.template emplace<nn::Reshape<T>>(Shape{4, 4, c});
  net_.template emplace<nn::PixelNorm<T>>();
  net_.template emplace<nn::LeakyReLU<T>>(slope);
  for (int i = 1; i < config.depth(); ++i) {
    net_.template emplace<nn::ConvTranspose2d<T>>(c, c / 2, 4, 2, 1);
    net_.template emplace<nn::PixelNorm<T>>();
    net_.template emplace<nn::LeakyReLU<T>>(slope);
    c /= 2;
  }
  net_.template emplace<nn::ConvTranspose2d<T>>(c, 3, 4, 2, 1);
  net_.template emplace<nn::Tanh<T>>();
}

template <typename T>
Tensor<T> GeneratorT<T>::forward(const Tensor<T>& z, const Tensor<T>& y, nn::Trace<T>* trace) const {
  if (z.rank() != 2 || z.dim(1) != d_z_ || y.rank() != 2 || y.dim(1) != n_a_ || y.dim(0) != z.dim(0))
    throw DimensionError("generator: expected z M×" + std::to_string(d_z_) + " and y M×" + std::to_string(n_a_) +
                         ", got " + shape_string(z.shape()) + " and " + shape_string(y.shape()));
  const Tensor<T>* parts[] = {&z, &y};
  return net_.forward(concat_features<T>(parts), trace);
}

template <typename T>
typename GeneratorT<T>::InputGrads GeneratorT<T>::backward(const Tensor<T>& grad_images, const nn::Trace<T>& trace,
                                                           std::vector<Tensor<T>>* grads,
                                                           bool need_input_grad) const {
  Tensor<T> g = net_.backward(grad_images, trace, grads, need_input_grad);
  if (!need_input_grad) return {};
  const int widths[] = {d_z_, n_a_};
  auto parts = split_features<T>(g, widths);
  return {std::move(parts[0]), std::move(parts[1])};
}

// ---------------------------------------------------------------- FeatureNet

template <typename T>
FeatureNetT<T>::FeatureNetT(nn::Sequential<T> trunk, nn::Sequential<T> head, int image_size)
    : trunk_(std::move(trunk)), head_(std::move(head)), image_size_(image_size) {}

template <typename T>
typename FeatureNetT<T>::Output FeatureNetT<T>::forward(const Tensor<T>& x, Trace* trace) const {
  if (x.rank() != 4 || x.dim(1) != image_size_ || x.dim(2) != image_size_ || x.dim(3) != 3)
    throw DimensionError("expected images M×" + std::to_string(image_size_) + "×" + std::to_string(image_size_) +
                         "×3, got " + shape_string(x.shape()));
  Output o;
  o.features = trunk_.forward(x, trace ? &trace->trunk : nullptr);
  o.out = head_.forward(o.features, trace ? &trace->head : nullptr);
  return o;
}

template <typename T>
Tensor<T> FeatureNetT<T>::backward(const Tensor<T>& grad_out, const Tensor<T>* grad_features, const Trace& trace,
                                   std::vector<Tensor<T>>* grads, bool need_input_grad) const {
  const std::size_t n_trunk = trunk_.params().size();
  std::vector<Tensor<T>> trunk_grads, head_grads;
  if (grads) {
    if (grads->size() != n_trunk + head_.params().size()) throw std::logic_error("feature net: gradient mismatch");
    trunk_grads.assign(std::make_move_iterator(grads->begin()), std::make_move_iterator(grads->begin() + n_trunk));
    head_grads.assign(std::make_move_iterator(grads->begin() + n_trunk), std::make_move_iterator(grads->end()));
  }
  Tensor<T> gf = head_.backward(grad_out, trace.head, grads ? &head_grads : nullptr, true);
  if (grad_features)
    for (std::size_t i = 0; i < gf.size(); ++i) gf[i] += (*grad_features)[i];
  Tensor<T> dx;
  if (grads || need_input_grad) dx = trunk_.backward(gf, trace.trunk, grads ? &trunk_grads : nullptr, need_input_grad);
  if (grads) {
    std::move(trunk_grads.begin(), trunk_grads.end(), grads->begin());
    std::move(head_grads.begin(), head_grads.end(), grads->begin() + n_trunk);
  }
  return dx;
}

template <typename T>
std::vector<Tensor<T>*> FeatureNetT<T>::params() {
  auto p = trunk_.params();
  auto h = head_.params();
  p.insert(p.end(), h.begin(), h.end());
  return p;
}

template <typename T>
std::vector<const Tensor<T>*> FeatureNetT<T>::params() const {
  auto p = trunk_.params();
  auto h = head_.params();
  p.insert(p.end(), h.begin(), h.end());
  return p;
}

template <typename T>
std::vector<std::string> FeatureNetT<T>::param_names() const {
  std::vector<std::string> out;
  for (auto& n : trunk_.param_names()) out.push_back("trunk." + n);
  for (auto& n : head_.param_names()) out.push_back("head." + n);
  return out;
}

template <typename T>
std::vector<Tensor<T>> FeatureNetT<T>::zero_grads() const {
  std::vector<Tensor<T>> out;
  for (const auto* p : params()) out.emplace_back(p->shape());
  return out;
}

template <typename T>
std::size_t FeatureNetT<T>::param_count() const {
  return trunk_.param_count() + head_.param_count();
}

template <typename T>
void FeatureNetT<T>::init(nn::Rng& rng) {
  trunk_.init(rng);
  head_.init(rng);
}

template <typename T>
void FeatureNetT<T>::kink_pattern(const Trace& trace, std::vector<bool>& out) const {
  trunk_.kink_pattern(trace.trunk, out);
  head_.kink_pattern(trace.head, out);
}

namespace {

template <typename T>
nn::Sequential<T> conv_trunk(const NetworkConfig& config, int base_channels, int features) {
  const T slope = static_cast<T>(config.leaky_slope);
  nn::Sequential<T> trunk;
  int c = base_channels;
  trunk.template emplace<nn::Conv2d<T>>(3, c, 4, 2, 1);
  trunk.template emplace<nn::LeakyReLU<T>>(slope);
  for (int i = 1; i < config.depth(); ++i) {
    trunk.template emplace<nn::Conv2d<T>>(c, 2 * c, 4, 2, 1);
    trunk.template emplace<nn::LeakyReLU<T>>(slope);
    c *= 2;
  }
  trunk.template emplace<nn::Reshape<T>>(Shape{4 * 4 * c});
  trunk.template emplace<nn::Linear<T>>(4 * 4 * c, features);
  trunk.template emplace<nn::LeakyReLU<T>>(slope);
  return trunk;
}

}  // namespace

template <typename T>
FeatureNetT<T> make_discriminator(const NetworkConfig& config) {
  config.validate();
  nn::Sequential<T> head;
  head.template emplace<nn::Linear<T>>(config.f_d, 1);
  head.template emplace<nn::Sigmoid<T>>();
  return FeatureNetT<T>(conv_trunk<T>(config, config.d_channels, config.f_d), std::move(head), config.resolution);
}

template <typename T>
FeatureNetT<T> make_classifier(const NetworkConfig& config) {
  config.validate();
  nn::Sequential<T> head;
  head.template emplace<nn::Linear<T>>(config.f_c, config.n_a);
  return FeatureNetT<T>(conv_trunk<T>(config, config.c_channels, config.f_c), std::move(head), config.resolution);
}

// ---------------------------------------------------------------- ConnectionNet

template <typename T>
ConnectionNetT<T>::ConnectionNetT(const NetworkConfig& config)
    : f_d_(config.f_d), f_c_(config.f_c), n_a_(config.n_a) {
  const T slope = static_cast<T>(config.leaky_slope);
  int in = config.f_d + config.f_c + config.n_a;
  for (int i = 0; i < config.cn_layers; ++i) {
    net_.template emplace<nn::Linear<T>>(in, config.cn_hidden);
    net_.template emplace<nn::LeakyReLU<T>>(slope);
    in = config.cn_hidden;
  }
  net_.template emplace<nn::Linear<T>>(in, config.d_z);
  net_.template emplace<nn::Tanh<T>>();
}

template <typename T>
Tensor<T> ConnectionNetT<T>::forward(const Tensor<T>& f_d, const Tensor<T>& f_c, const Tensor<T>& y,
                                     nn::Trace<T>* trace) const {
  if (f_d.rank() != 2 || f_d.dim(1) != f_d_ || f_c.rank() != 2 || f_c.dim(1) != f_c_ || y.rank() != 2 ||
      y.dim(1) != n_a_ || f_c.dim(0) != f_d.dim(0) || y.dim(0) != f_d.dim(0))
    throw DimensionError("connection: expected f_d M×" + std::to_string(f_d_) + ", f_c M×" + std::to_string(f_c_) +
                         ", y M×" + std::to_string(n_a_));
  const Tensor<T>* parts[] = {&f_d, &f_c, &y};
  return net_.forward(concat_features<T>(parts), trace);
}

template <typename T>
void ConnectionNetT<T>::backward(const Tensor<T>& grad_z, const nn::Trace<T>& trace,
                                 std::vector<Tensor<T>>* grads) const {
  net_.backward(grad_z, trace, grads, false);
}

// ---------------------------------------------------------------- ModelState

template <typename T>
std::vector<Tensor<T>*> ModelStateT<T>::params(Network n) {
  switch (n) {
    case Network::generator: return generator.net().params();
    case Network::discriminator: return discriminator.params();
    case Network::classifier: return classifier.params();
    case Network::connection: return connection.net().params();
  }
  return {};
}

template <typename T>
std::vector<const Tensor<T>*> ModelStateT<T>::params(Network n) const {
  switch (n) {
    case Network::generator: return generator.net().params();
    case Network::discriminator: return discriminator.params();
    case Network::classifier: return classifier.params();
    case Network::connection: return connection.net().params();
  }
  return {};
}

template <typename T>
std::vector<std::string> ModelStateT<T>::param_names(Network n) const {
  switch (n) {
    case Network::generator: return generator.net().param_names();
    case Network::discriminator: return discriminator.param_names();
    case Network::classifier: return classifier.param_names();
    case Network::connection: return connection.net().param_names();
  }
  return {};
}

template <typename T>
bool ModelStateT<T>::all_finite() const {
  for (Network n : kAllNetworks)
    for (const auto* p : params(n))
      if (!p->all_finite()) return false;
  return true;
}

template <typename T>
template <typename U>
ModelStateT<U> ModelStateT<T>::cast() const {
  ModelStateT<U> out;
  out.config = config;
  out.generator = GeneratorT<U>(config);
  out.discriminator = make_discriminator<U>(config);
  out.classifier = make_classifier<U>(config);
  out.connection = ConnectionNetT<U>(config);
  for (Network n : kAllNetworks) {
    auto src = params(n);
    auto dst = out.params(n);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    const auto& a = adam(n);
    auto& b = out.adam(n);
    b.step = a.step;
    for (const auto& m : a.m) b.m.push_back(m.template cast<U>());
    for (const auto& v : a.v) b.v.push_back(v.template cast<U>());
  }
  out.step = step;
  out.rng = rng;
  return out;
}

template <typename T>
ModelStateT<T> init_params(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  ModelStateT<T> s;
  s.config = config;
  s.generator = GeneratorT<T>(config);
  s.discriminator = make_discriminator<T>(config);
  s.classifier = make_classifier<T>(config);
  s.connection = ConnectionNetT<T>(config);
  std::seed_seq init_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0u};
  nn::Rng init_rng(init_seq);
  s.generator.net().init(init_rng);
  s.discriminator.init(init_rng);
  s.classifier.init(init_rng);
  s.connection.net().init(init_rng);
  s.adam(Network::generator) = nn::make_adam_state(s.generator.net());
  s.adam(Network::connection) = nn::make_adam_state(s.connection.net());
  for (Network n : {Network::discriminator, Network::classifier}) {
    auto& a = s.adam(n);
    a.m = n == Network::discriminator ? s.discriminator.zero_grads() : s.classifier.zero_grads();
    a.v = a.m;
  }
  std::seed_seq train_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
  s.rng = nn::Rng(train_seq);
  return s;
}

template <typename T>
Tensor<T> sample_latent(int m, int d_z, nn::Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<T> z({m, d_z});
  for (auto& v : z.values()) v = static_cast<T>(u(rng));
  return z;
}

Tensor<float> generator_forward(const ModelState& state, const Tensor<float>& z, const Tensor<float>& y) {
  return state.generator.forward(z, y, nullptr);
}

Discrimination discriminator_forward(const ModelState& state, const Tensor<float>& images) {
  auto o = state.discriminator.forward(images, nullptr);
  o.out.reshape({o.out.dim(0)});
  return {std::move(o.out), std::move(o.features)};
}

Classification classifier_forward(const ModelState& state, const Tensor<float>& images) {
  auto o = state.classifier.forward(images, nullptr);
  return {std::move(o.out), std::move(o.features)};
}

Tensor<float> connection_forward(const ModelState& state, const Tensor<float>& f_d, const Tensor<float>& f_c,
                                 const Tensor<float>& y) {
  return state.connection.forward(f_d, f_c, y, nullptr);
}

#define EGAN_INSTANTIATE_MODELS(T)                                                     \
  template class GeneratorT<T>;                                                        \
  template class FeatureNetT<T>;                                                       \
  template class ConnectionNetT<T>;                                                    \
  template struct ModelStateT<T>;                                                      \
  template FeatureNetT<T> make_discriminator<T>(const NetworkConfig&);                 \
  template FeatureNetT<T> make_classifier<T>(const NetworkConfig&);                    \
  template ModelStateT<T> init_params<T>(const NetworkConfig&, std::uint64_t);         \
  template Tensor<T> sample_latent<T>(int, int, nn::Rng&);

EGAN_INSTANTIATE_MODELS(float)
EGAN_INSTANTIATE_MODELS(double)

template ModelStateT<double> ModelStateT<float>::cast<double>() const;
template ModelStateT<float> ModelStateT<double>::cast<float>() const;
template ModelStateT<float> ModelStateT<float>::cast<float>() const;

}  // namespace egan
