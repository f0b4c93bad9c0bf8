#include "egan/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace egan::losses {
namespace {

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(who) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename T>
void require_matrix(const Tensor<T>& a, const char* who) {
  if (a.rank() != 2 || a.dim(0) < 1) throw DimensionError(std::string(who) + ": expected an M×n matrix");
}

double safe_log(double p) { return std::log(std::max(p, kLogEpsilon)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename T>
double attribute_loss_impl(const Tensor<T>& logits, const Tensor<T>& labels, const SelectiveWeights& w,
                           Tensor<T>* grad) {
  require_matrix(logits, "attribute_loss");
  require_same(logits, labels, "attribute_loss");
  const int m = logits.dim(0), n = logits.dim(1);
  if (static_cast<int>(w.w_p.size()) != n || static_cast<int>(w.w_n.size()) != n)
    throw DimensionError("attribute_loss: weights cover " + std::to_string(w.w_p.size()) + " attributes, logits " +
                         std::to_string(n));
  if (grad) *grad = Tensor<T>(logits.shape());
  double total = 0;
  for (int r = 0; r < m; ++r) {
    for (int i = 0; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(r) * n + i;
      const double y = static_cast<double>(labels[k]);
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("attribute_loss: labels must be 0 or 1");
      const double s = sigmoid(static_cast<double>(logits[k]));
      if (y == 1.0) {
        total -= w.w_p[i] * safe_log(s);
        if (grad && s > kLogEpsilon) (*grad)[k] = static_cast<T>(-w.w_p[i] * (1.0 - s) / m);
      } else {
        total -= w.w_n[i] * safe_log(1.0 - s);
        if (grad && 1.0 - s > kLogEpsilon) (*grad)[k] = static_cast<T>(w.w_n[i] * s / m);
      }
    }
  }
  return total / m;
}

}  // namespace

bool LossReport::all_finite() const {
  for (double v : {discriminator, classifier, adversarial, gen_attr_real, gen_attr_random, connection,
                   generator_total})
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
SelectiveWeights selective_weights(const Tensor<T>& labels) {
  require_matrix(labels, "selective_weights");
  const int m = labels.dim(0), n = labels.dim(1);
  if (m < 2) throw std::invalid_argument("selective_weights: batch size must be at least 2");
  SelectiveWeights w;
  w.batch = m;
  w.positives.assign(n, 0);
  for (int r = 0; r < m; ++r)
    for (int i = 0; i < n; ++i) {
      const T v = labels[static_cast<std::size_t>(r) * n + i];
      if (v != T(0) && v != T(1)) throw std::invalid_argument("selective_weights: labels must be 0 or 1");
      if (v == T(1)) ++w.positives[i];
    }
  w.w_p.resize(n);
  w.w_n.resize(n);
  for (int i = 0; i < n; ++i) {
    const int pos = w.positives[i];
    if (pos == 0) {
      w.w_p[i] = 0.0;
      w.w_n[i] = 1.0;
    } else if (pos == m) {
      w.w_p[i] = 1.0;
      w.w_n[i] = 0.0;
    } else {
      w.w_p[i] = static_cast<double>(m) / (2.0 * pos);
      w.w_n[i] = static_cast<double>(m) / (2.0 * (m - pos));
    }
  }
  return w;
}

template <typename T>
double attribute_loss(const Tensor<T>& logits, const Tensor<T>& labels, const SelectiveWeights& weights) {
  return attribute_loss_impl<T>(logits, labels, weights, nullptr);
}

template <typename T>
Differentiated<T> attribute_loss_grad(const Tensor<T>& logits, const Tensor<T>& labels,
                                      const SelectiveWeights& weights) {
  Differentiated<T> d;
  d.value = attribute_loss_impl<T>(logits, labels, weights, &d.grad);
  return d;
}

template <typename T>
DiscriminatorGrad<T> discriminator_loss_grad(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  if (d_real.empty() || d_fake.empty()) throw DimensionError("discriminator_loss: empty input");
  DiscriminatorGrad<T> out;
  out.grad_real = Tensor<T>(d_real.shape());
  out.grad_fake = Tensor<T>(d_fake.shape());
  const double mr = static_cast<double>(d_real.size()), mf = static_cast<double>(d_fake.size());
  double real = 0, fake = 0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    const double p = d_real[i];
    real -= safe_log(p);
    if (p > kLogEpsilon) out.grad_real[i] = static_cast<T>(-1.0 / (mr * p));
  }
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    const double q = 1.0 - static_cast<double>(d_fake[i]);
    fake -= safe_log(q);
    if (q > kLogEpsilon) out.grad_fake[i] = static_cast<T>(1.0 / (mf * q));
  }
  out.value = real / mr + fake / mf;
  return out;
}

template <typename T>
double discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  return discriminator_loss_grad(d_real, d_fake).value;
}

template <typename T>
Differentiated<T> generator_adversarial_loss_grad(const Tensor<T>& d_fake) {
  if (d_fake.empty()) throw DimensionError("generator_adversarial_loss: empty input");
  Differentiated<T> out;
  out.grad = Tensor<T>(d_fake.shape());
  const double m = static_cast<double>(d_fake.size());
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    const double p = d_fake[i];
    out.value -= safe_log(p);
    if (p > kLogEpsilon) out.grad[i] = static_cast<T>(-1.0 / (m * p));
  }
  out.value /= m;
  return out;
}

template <typename T>
double generator_adversarial_loss(const Tensor<T>& d_fake) {
  return generator_adversarial_loss_grad(d_fake).value;
}

template <typename T>
Differentiated<T> connection_loss_grad(const Tensor<T>& z, const Tensor<T>& z_tilde) {
  require_same(z, z_tilde, "connection_loss");
  if (z.empty()) throw DimensionError("connection_loss: empty input");
  Differentiated<T> out;
  out.grad = Tensor<T>(z.shape());
  const double n = static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = static_cast<double>(z[i]) - static_cast<double>(z_tilde[i]);
    out.value += std::abs(d);
    out.grad[i] = static_cast<T>(d > 0 ? -1.0 / n : (d < 0 ? 1.0 / n : 0.0));
  }
  out.value /= n;
  return out;
}

template <typename T>
double connection_loss(const Tensor<T>& z, const Tensor<T>& z_tilde) {
  return connection_loss_grad(z, z_tilde).value;
}

#define EGAN_INSTANTIATE_LOSSES(T)                                                                            \
  template SelectiveWeights selective_weights<T>(const Tensor<T>&);                                           \
  template double attribute_loss<T>(const Tensor<T>&, const Tensor<T>&, const SelectiveWeights&);             \
  template Differentiated<T> attribute_loss_grad<T>(const Tensor<T>&, const Tensor<T>&,                       \
                                                    const SelectiveWeights&);                                 \
  template double discriminator_loss<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template DiscriminatorGrad<T> discriminator_loss_grad<T>(const Tensor<T>&, const Tensor<T>&);               \
  template double generator_adversarial_loss<T>(const Tensor<T>&);                                            \
  template Differentiated<T> generator_adversarial_loss_grad<T>(const Tensor<T>&);                            \
  template double connection_loss<T>(const Tensor<T>&, const Tensor<T>&);                                     \
  template Differentiated<T> connection_loss_grad<T>(const Tensor<T>&, const Tensor<T>&);

EGAN_INSTANTIATE_LOSSES(float)
EGAN_INSTANTIATE_LOSSES(double)

}  // namespace egan::losses
