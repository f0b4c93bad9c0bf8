#include "egan/nn.hpp"

#include <cmath>
#include <sstream>

namespace egan {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

}  // namespace egan

namespace egan::nn {
namespace {

template <typename T>
void uniform_fill(Tensor<T>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}


template <typename T>
void require(const Tensor<T>& x, int rank, int last, const char* who) {
  if (x.rank() != rank || (last >= 0 && x.shape().back() != last)) {
    std::ostringstream os;
    os << who << ": unexpected input shape " << shape_string(x.shape()) << " (rank " << rank;
    if (last >= 0) os << ", last dim " << last;
    os << " expected)";
    throw DimensionError(os.str());
  }
}

// out[j] += Σ_r g[r, j], summed in row order. Eigen's colwise reduction picks a
// path by pointer alignment, which made gradients depend on heap addresses.
template <typename T>
void add_column_sums(const T* g, std::size_t rows, std::size_t cols, T* out) {
  std::vector<T> acc(g, g + (rows ? cols : 0));
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) acc[j] += g[r * cols + j];
  for (std::size_t j = 0; j < acc.size(); ++j) out[j] += acc[j];
}

}  // namespace

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in, int out) : in_(in), out_(out), weight_({out, in}), bias_({out}) {}

template <typename T>
void Linear<T>::init(Rng& rng) {
  uniform_fill(weight_, 1.0 / std::sqrt(static_cast<double>(in_)), rng);
  bias_.fill(T(0));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  require(x, 2, in_, "linear");
  const int n = x.dim(0);
  Tensor<T> y({n, out_});
  auto Y = as_matrix(y, n, out_);
  Y.noalias() = as_matrix(x, n, in_) * as_matrix(weight_, out_, in_).transpose();
  Y.rowwise() += as_matrix(bias_, 1, out_).row(0);
  if (cache) {
    cache->input_shape = x.shape();
    cache->saved = {x};
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                              bool need_input_grad) const {
  const Tensor<T>& x = cache.saved.at(0);
  const int n = x.dim(0);
  auto G = as_matrix(g, n, out_);
  if (!grads.empty()) {
    as_matrix(grads[0], out_, in_).noalias() += G.transpose() * as_matrix(x, n, in_);
    add_column_sums(g.data(), n, out_, grads[1].data());
  }
  if (!need_input_grad) return {};
  Tensor<T> dx({n, in_});
  as_matrix(dx, n, in_).noalias() = G * as_matrix(weight_, out_, in_);
  return dx;
}

// ---------------------------------------------------------------- im2col

template <typename T>
void im2col(const T* x, int batch, const ConvGeometry& g, T* cols) {
  const int c = g.channels;
  const std::size_t row_len = static_cast<std::size_t>(g.kernel) * g.kernel * c;
  for (int n = 0; n < batch; ++n) {
    const T* img = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * c;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        T* dst = cols + ((static_cast<std::size_t>(n) * g.out_h + oy) * g.out_w + ox) * row_len;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int kx = 0; kx < g.kernel; ++kx, dst += c) {
            const int ix = ox * g.stride - g.pad + kx;
            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
              std::fill_n(dst, c, T(0));
            } else {
              std::copy_n(img + (static_cast<std::size_t>(iy) * g.in_w + ix) * c, c, dst);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int batch, const ConvGeometry& g, T* x) {
  const int c = g.channels;
  const std::size_t row_len = static_cast<std::size_t>(g.kernel) * g.kernel * c;
  for (int n = 0; n < batch; ++n) {
    T* img = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * c;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const T* src = cols + ((static_cast<std::size_t>(n) * g.out_h + oy) * g.out_w + ox) * row_len;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int kx = 0; kx < g.kernel; ++kx, src += c) {
            const int ix = ox * g.stride - g.pad + kx;
            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
            T* dst = img + (static_cast<std::size_t>(iy) * g.in_w + ix) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad)
    : cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      s_(stride),
      p_(pad),
      weight_({kernel * kernel * in_channels, out_channels}),
      bias_({out_channels}) {}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  uniform_fill(weight_, 1.0 / std::sqrt(static_cast<double>(k_ * k_ * cin_)), rng);
  bias_.fill(T(0));
}

template <typename T>
ConvGeometry Conv2d<T>::geometry(const Shape& in) const {
  ConvGeometry g{in[1], in[2], cin_, k_, s_, p_, 0, 0};
  g.out_h = (g.in_h + 2 * p_ - k_) / s_ + 1;
  g.out_w = (g.in_w + 2 * p_ - k_) / s_ + 1;
  if (g.out_h <= 0 || g.out_w <= 0) throw DimensionError("conv2d: input too small " + shape_string(in));
  return g;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  require(x, 4, cin_, "conv2d");
  const ConvGeometry g = geometry(x.shape());
  const int n = x.dim(0);
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * g.out_h * g.out_w;
  const Eigen::Index klen = static_cast<Eigen::Index>(k_) * k_ * cin_;
  Tensor<T> cols({static_cast<int>(rows), static_cast<int>(klen)});
  im2col(x.data(), n, g, cols.data());
  Tensor<T> y({n, g.out_h, g.out_w, cout_});
  auto Y = as_matrix(y, rows, cout_);
  Y.noalias() = as_matrix(cols, rows, klen) * as_matrix(weight_, klen, cout_);
  Y.rowwise() += as_matrix(bias_, 1, cout_).row(0);
  if (cache) {
    cache->input_shape = x.shape();
    cache->saved = {std::move(cols)};
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                              bool need_input_grad) const {
  const ConvGeometry geo = geometry(cache.input_shape);
  const Tensor<T>& cols = cache.saved.at(0);
  const int n = cache.input_shape[0];
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * geo.out_h * geo.out_w;
  const Eigen::Index klen = static_cast<Eigen::Index>(k_) * k_ * cin_;
  auto G = as_matrix(g, rows, cout_);
  if (!grads.empty()) {
    as_matrix(grads[0], klen, cout_).noalias() += as_matrix(cols, rows, klen).transpose() * G;
    add_column_sums(g.data(), rows, cout_, grads[1].data());
  }
  if (!need_input_grad) return {};
  Tensor<T> dcols({static_cast<int>(rows), static_cast<int>(klen)});
  as_matrix(dcols, rows, klen).noalias() = G * as_matrix(weight_, klen, cout_).transpose();
  Tensor<T> dx(cache.input_shape);
  col2im(dcols.data(), n, geo, dx.data());
  return dx;
}

// ---------------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad)
    : cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      s_(stride),
      p_(pad),
      weight_({in_channels, kernel * kernel * out_channels}),
      bias_({out_channels}) {}

template <typename T>
void ConvTranspose2d<T>::init(Rng& rng) {
  // Each output pixel receives cin·(k/s)² contributions.
  const double fan_in = static_cast<double>(cin_) * k_ * k_ / (static_cast<double>(s_) * s_);
  uniform_fill(weight_, 1.0 / std::sqrt(fan_in), rng);
  bias_.fill(T(0));
}

template <typename T>
ConvGeometry ConvTranspose2d<T>::geometry(const Shape& in) const {
  // Geometry of the forward convolution whose adjoint this layer computes.
  const int out_h = (in[1] - 1) * s_ - 2 * p_ + k_;
  const int out_w = (in[2] - 1) * s_ - 2 * p_ + k_;
  if (out_h <= 0 || out_w <= 0) throw DimensionError("conv_transpose2d: bad input " + shape_string(in));
  return ConvGeometry{out_h, out_w, cout_, k_, s_, p_, in[1], in[2]};
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  require(x, 4, cin_, "conv_transpose2d");
  const ConvGeometry g = geometry(x.shape());
  const int n = x.dim(0);
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * g.out_h * g.out_w;
  const Eigen::Index klen = static_cast<Eigen::Index>(k_) * k_ * cout_;
  Tensor<T> cols({static_cast<int>(rows), static_cast<int>(klen)});
  as_matrix(cols, rows, klen).noalias() = as_matrix(x, rows, cin_) * as_matrix(weight_, cin_, klen);
  Tensor<T> y({n, g.in_h, g.in_w, cout_});
  col2im(cols.data(), n, g, y.data());
  as_matrix(y, static_cast<Eigen::Index>(n) * g.in_h * g.in_w, cout_).rowwise() += as_matrix(bias_, 1, cout_).row(0);
  if (cache) {
    cache->input_shape = x.shape();
    cache->saved = {x};
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache,
                                       std::span<Tensor<T>> grads, bool need_input_grad) const {
  const ConvGeometry geo = geometry(cache.input_shape);
  const Tensor<T>& x = cache.saved.at(0);
  const int n = cache.input_shape[0];
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * geo.out_h * geo.out_w;
  const Eigen::Index klen = static_cast<Eigen::Index>(k_) * k_ * cout_;
  Tensor<T> dcols({static_cast<int>(rows), static_cast<int>(klen)});
  im2col(g.data(), n, geo, dcols.data());
  auto DC = as_matrix(dcols, rows, klen);
  if (!grads.empty()) {
    as_matrix(grads[0], cin_, klen).noalias() += as_matrix(x, rows, cin_).transpose() * DC;
    add_column_sums(g.data(), static_cast<std::size_t>(n) * geo.in_h * geo.in_w, cout_, grads[1].data());
  }
  if (!need_input_grad) return {};
  Tensor<T> dx(cache.input_shape);
  as_matrix(dx, rows, cin_).noalias() = DC * as_matrix(weight_, cin_, klen).transpose();
  return dx;
}

// ---------------------------------------------------------------- activations

template <typename T>
Tensor<T> LeakyReLU<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : v * slope_;
  if (cache) {
    cache->input_shape = x.shape();
    cache->saved = {x};
  }
  return y;
}

template <typename T>
Tensor<T> LeakyReLU<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>>,
                                 bool need_input_grad) const {
  if (!need_input_grad) return {};
  const Tensor<T>& x = cache.saved.at(0);
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > T(0))) dx[i] *= slope_;
  return dx;
}

template <typename T>
void LeakyReLU<T>::kink_pattern(const LayerCache<T>& cache, std::vector<bool>& out) const {
  for (T v : cache.saved.at(0).values()) out.push_back(v > T(0));
}

template <typename T>
Tensor<T> Tanh<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = std::tanh(v);
  if (cache) {
    cache->input_shape = x.shape();
    cache->saved = {y};
  }
  return y;
}

template <typename T>
Tensor<T> Tanh<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>>,
                            bool need_input_grad) const {
  if (!need_input_grad) return {};
  const Tensor<T>& y = cache.saved.at(0);
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= T(1) - y[i] * y[i];
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = T(1) / (T(1) + std::exp(-v));
  if (cache) {
    cache->input_shape = x.shape();
    cache->saved = {y};
  }
  return y;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>>,
                               bool need_input_grad) const {
  if (!need_input_grad) return {};
  const Tensor<T>& y = cache.saved.at(0);
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (T(1) - y[i]);
  return dx;
}

template <typename T>
Tensor<T> PixelNorm<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  constexpr T eps = T(1e-8);
  const int c = x.shape().back();
  const std::size_t positions = x.size() / c;
  Tensor<T> y = x;
  Tensor<T> inv({static_cast<int>(positions)});
  for (std::size_t p = 0; p < positions; ++p) {
    T* v = y.data() + p * c;
    T ss = 0;
    for (int i = 0; i < c; ++i) ss += v[i] * v[i];
    const T r = T(1) / std::sqrt(ss / c + eps);
    inv[p] = r;
    for (int i = 0; i < c; ++i) v[i] *= r;
  }
  if (cache) {
    cache->input_shape = x.shape();
    cache->saved = {x, std::move(inv)};
  }
  return y;
}

template <typename T>
Tensor<T> PixelNorm<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>>,
                                 bool need_input_grad) const {
  if (!need_input_grad) return {};
  const Tensor<T>& x = cache.saved.at(0);
  const Tensor<T>& inv = cache.saved.at(1);
  const int c = x.shape().back();
  Tensor<T> dx(x.shape());
  for (std::size_t p = 0; p < inv.size(); ++p) {
    const T* xv = x.data() + p * c;
    const T* gv = g.data() + p * c;
    T* dv = dx.data() + p * c;
    T dot = 0;
    for (int i = 0; i < c; ++i) dot += gv[i] * xv[i];
    const T r = inv[p];
    const T k = r * r * r * dot / c;
    for (int i = 0; i < c; ++i) dv[i] = r * gv[i] - k * xv[i];
  }
  return dx;
}

template <typename T>
Tensor<T> Reshape<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  Shape s{x.dim(0)};
  s.insert(s.end(), per_sample_.begin(), per_sample_.end());
  if (cache) cache->input_shape = x.shape();
  return x.reshaped(s);
}

template <typename T>
Tensor<T> Reshape<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>>,
                               bool need_input_grad) const {
  if (!need_input_grad) return {};
  return g.reshaped(cache.input_shape);
}

// ---------------------------------------------------------------- Sequential

template <typename T>
Sequential<T>::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Sequential<T>& Sequential<T>::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
Sequential<T>& Sequential<T>::add(std::unique_ptr<Layer<T>> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Trace<T>* trace) const {
  if (trace) trace->layers.assign(layers_.size(), {});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, trace ? &trace->layers[i] : nullptr);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out, const Trace<T>& trace, std::vector<Tensor<T>>* grads,
                                  bool need_input_grad) const {
  if (trace.layers.size() != layers_.size()) throw std::logic_error("sequential: trace does not match network");
  std::vector<std::size_t> offset(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    offset[i + 1] = offset[i] + static_cast<const Layer<T>&>(*layers_[i]).params().size();
  if (grads && grads->size() != offset.back()) throw std::logic_error("sequential: gradient buffer mismatch");

  Tensor<T> g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    std::span<Tensor<T>> layer_grads;
    if (grads) layer_grads = std::span<Tensor<T>>(grads->data() + offset[k], offset[k + 1] - offset[k]);
    const bool want_input = k > 0 || need_input_grad;
    g = layers_[k]->backward(g, trace.layers[k], layer_grads, want_input);
  }
  return g;
}

template <typename T>
std::vector<Tensor<T>*> Sequential<T>::params() {
  std::vector<Tensor<T>*> out;
  for (auto& l : layers_) {
    auto p = l->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Sequential<T>::params() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& l : layers_) {
    auto p = static_cast<const Layer<T>&>(*l).params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<std::string> Sequential<T>::param_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (const auto& n : layers_[i]->param_names()) out.push_back(std::to_string(i) + "." + n);
  return out;
}

template <typename T>
std::vector<Tensor<T>> Sequential<T>::zero_grads() const {
  std::vector<Tensor<T>> out;
  for (const auto* p : params()) out.emplace_back(p->shape());
  return out;
}

template <typename T>
std::size_t Sequential<T>::param_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->size();
  return n;
}

template <typename T>
void Sequential<T>::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

template <typename T>
void Sequential<T>::kink_pattern(const Trace<T>& trace, std::vector<bool>& out) const {
  for (std::size_t i = 0; i < layers_.size() && i < trace.layers.size(); ++i)
    layers_[i]->kink_pattern(trace.layers[i], out);
}

// ---------------------------------------------------------------- Residual

template <typename T>
Tensor<T> Residual<T>::forward(const Tensor<T>& x, LayerCache<T>* cache) const {
  Trace<T>* trace = nullptr;
  if (cache) {
    cache->input_shape = x.shape();
    cache->nested.assign(1, {});
    cache->saved.assign(1, {});
    trace = &cache->nested[0];
  }
  Tensor<T> h = body_.forward(x, trace);
  if (h.shape() != x.shape()) throw DimensionError("residual: body changes shape");
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
  LayerCache<T> act_cache;
  Tensor<T> y = act_.forward(h, cache ? &act_cache : nullptr);
  if (cache) cache->saved[0] = std::move(act_cache.saved.at(0));
  return y;
}

template <typename T>
Tensor<T> Residual<T>::backward(const Tensor<T>& g, const LayerCache<T>& cache, std::span<Tensor<T>> grads,
                                bool need_input_grad) const {
  LayerCache<T> act_cache;
  act_cache.saved = {cache.saved.at(0)};
  Tensor<T> gh = act_.backward(g, act_cache, {}, true);
  std::vector<Tensor<T>> local;
  std::vector<Tensor<T>>* gp = nullptr;
  if (!grads.empty()) {
    local.assign(std::make_move_iterator(grads.begin()), std::make_move_iterator(grads.end()));
    gp = &local;
  }
  Tensor<T> dx = body_.backward(gh, cache.nested.at(0), gp, need_input_grad);
  if (gp) std::move(local.begin(), local.end(), grads.begin());
  if (!need_input_grad) return {};
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gh[i];
  return dx;
}

template <typename T>
void Residual<T>::kink_pattern(const LayerCache<T>& cache, std::vector<bool>& out) const {
  body_.kink_pattern(cache.nested.at(0), out);
  for (T v : cache.saved.at(0).values()) out.push_back(v > T(0));
}

// ---------------------------------------------------------------- Adam

template <typename T>
AdamState<T> make_adam_state(const Sequential<T>& net) {
  AdamState<T> s;
  s.m = net.zero_grads();
  s.v = net.zero_grads();
  return s;
}

template <typename T>
void adam_update(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
                 const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::logic_error("adam_update: parameter/gradient count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T step_size = static_cast<T>(config.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(config.eps);
  for (std::size_t t = 0; t < params.size(); ++t) {
    T* p = params[t]->data();
    const T* g = grads[t].data();
    T* m = state.m[t].data();
    T* v = state.v[t].data();
    for (std::size_t i = 0, n = params[t]->size(); i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
  }
}

#define EGAN_INSTANTIATE_NN(T)                                                                               \
  template class Linear<T>;                                                                                  \
  template class Conv2d<T>;                                                                                  \
  template class ConvTranspose2d<T>;                                                                         \
  template class LeakyReLU<T>;                                                                               \
  template class Tanh<T>;                                                                                    \
  template class Sigmoid<T>;                                                                                 \
  template class PixelNorm<T>;                                                                               \
  template class Reshape<T>;                                                                                 \
  template class Sequential<T>;                                                                              \
  template class Residual<T>;                                                                                \
  template void im2col<T>(const T*, int, const ConvGeometry&, T*);                                           \
  template void col2im<T>(const T*, int, const ConvGeometry&, T*);                                           \
  template AdamState<T> make_adam_state<T>(const Sequential<T>&);                                            \
  template void adam_update<T>(std::span<Tensor<T>* const>, std::span<const Tensor<T>>, AdamState<T>&,       \
                               const AdamConfig&);

EGAN_INSTANTIATE_NN(float)
EGAN_INSTANTIATE_NN(double)

}  // namespace egan::nn
