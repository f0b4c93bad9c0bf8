#include <doctest.h>

#include <cmath>
#include <functional>

#include "egan/nn.hpp"
#include "test_util.hpp"

using namespace egan;
using namespace egan::nn;

namespace {

// Scalar probe L = Σ w ⊙ layer(x) with fixed random w.
struct Probe {
  const Layer<double>& layer;
  Tensor<double> weights;

  double value(const Tensor<double>& x) const {
    const Tensor<double> y = layer.forward(x, nullptr);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y[i];
    return s;
  }
};

double rel_err(double a, double n) {
  const double scale = std::max(std::abs(a), std::abs(n));
  return scale < 1e-8 ? std::abs(a - n) : std::abs(a - n) / scale;
}

// Central differences on every input entry and every parameter entry.
void check_layer_gradients(Layer<double>& layer, const Tensor<double>& x, std::uint64_t seed = 1) {
  Rng rng(seed);
  LayerCache<double> cache;
  const Tensor<double> y = layer.forward(x, &cache);
  Probe probe{layer, test::random_tensor<double>(y.shape(), rng)};

  std::vector<Tensor<double>> grads;
  for (const auto* p : static_cast<const Layer<double>&>(layer).params()) grads.emplace_back(p->shape());
  const Tensor<double> gx = layer.backward(probe.weights, cache, grads, true);
  REQUIRE(gx.shape() == x.shape());

  const double h = 1e-5;
  std::vector<bool> base_kinks;
  layer.kink_pattern(cache, base_kinks);
  auto same_kinks = [&](const Tensor<double>& xp) {
    LayerCache<double> c;
    layer.forward(xp, &c);
    std::vector<bool> k;
    layer.kink_pattern(c, k);
    return k == base_kinks;
  };

  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    if (!same_kinks(xp) || !same_kinks(xm)) continue;
    const double numeric = (probe.value(xp) - probe.value(xm)) / (2 * h);
    CHECK(rel_err(gx[i], numeric) < 1e-6);
  }
  auto params = layer.params();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t]->size(); ++i) {
      const double saved = (*params[t])[i];
      (*params[t])[i] = saved + h;
      const double up = probe.value(x);
      (*params[t])[i] = saved - h;
      const double down = probe.value(x);
      (*params[t])[i] = saved;
      CHECK(rel_err(grads[t][i], (up - down) / (2 * h)) < 1e-6);
    }
  }
}

template <typename L>
L initialized(L layer, std::uint64_t seed = 5) {
  Rng rng(seed);
  layer.init(rng);
  // Non-zero biases so their gradients are exercised against non-trivial outputs.
  for (auto* p : layer.params())
    if (p->rank() == 1)
      for (auto& v : p->values()) v = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  return layer;
}

}  // namespace

TEST_CASE("linear layer gradients") {
  Rng rng(2);
  auto layer = initialized(Linear<double>(5, 3));
  check_layer_gradients(layer, test::random_tensor<double>({4, 5}, rng));
}

TEST_CASE("conv2d gradients") {
  Rng rng(3);
  SUBCASE("stride 2, pad 1") {
    auto layer = initialized(Conv2d<double>(2, 3, 4, 2, 1));
    check_layer_gradients(layer, test::random_tensor<double>({2, 6, 6, 2}, rng));
  }
  SUBCASE("stride 1, pad 1, 3x3") {
    auto layer = initialized(Conv2d<double>(3, 2, 3, 1, 1));
    check_layer_gradients(layer, test::random_tensor<double>({1, 5, 5, 3}, rng));
  }
}

TEST_CASE("transposed conv gradients") {
  Rng rng(4);
  auto layer = initialized(ConvTranspose2d<double>(3, 2, 4, 2, 1));
  const Tensor<double> x = test::random_tensor<double>({2, 3, 3, 3}, rng);
  CHECK(layer.forward(x, nullptr).shape() == Shape{2, 6, 6, 2});
  check_layer_gradients(layer, x);
}

TEST_CASE("activation and normalization gradients") {
  Rng rng(5);
  const Tensor<double> x = test::random_tensor<double>({3, 2, 2, 4}, rng, -2.0, 2.0);
  SUBCASE("leaky relu") {
    LeakyReLU<double> l(0.2);
    check_layer_gradients(l, x);
  }
  SUBCASE("tanh") {
    Tanh<double> l;
    check_layer_gradients(l, x);
  }
  SUBCASE("sigmoid") {
    Sigmoid<double> l;
    check_layer_gradients(l, x);
  }
  SUBCASE("pixel norm") {
    PixelNorm<double> l;
    check_layer_gradients(l, x);
  }
  SUBCASE("reshape") {
    Reshape<double> l({16});
    CHECK(l.forward(x, nullptr).shape() == Shape{3, 16});
    check_layer_gradients(l, x);
  }
}

TEST_CASE("residual block gradients") {
  Rng rng(6);
  Sequential<double> body;
  body.emplace<Conv2d<double>>(2, 2, 3, 1, 1).emplace<LeakyReLU<double>>(0.2).emplace<Conv2d<double>>(2, 2, 3, 1, 1);
  body.init(rng);
  Residual<double> block(std::move(body), 0.2);
  check_layer_gradients(block, test::random_tensor<double>({2, 4, 4, 2}, rng));
}

TEST_CASE("im2col and col2im are adjoint") {
  Rng rng(7);
  for (const ConvGeometry g : {ConvGeometry{6, 6, 2, 4, 2, 1, 3, 3}, ConvGeometry{5, 4, 3, 3, 1, 1, 5, 4},
                               ConvGeometry{8, 8, 1, 4, 2, 1, 4, 4}}) {
    const int batch = 2;
    const std::size_t xs = static_cast<std::size_t>(batch) * g.in_h * g.in_w * g.channels;
    const std::size_t cs = static_cast<std::size_t>(batch) * g.out_h * g.out_w * g.kernel * g.kernel * g.channels;
    const auto x = test::random_tensor<double>({static_cast<int>(xs)}, rng);
    const auto c = test::random_tensor<double>({static_cast<int>(cs)}, rng);
    std::vector<double> cols(cs), back(xs, 0.0);
    im2col(x.data(), batch, g, cols.data());
    col2im(c.data(), batch, g, back.data());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cs; ++i) lhs += cols[i] * c[i];
    for (std::size_t i = 0; i < xs; ++i) rhs += x[i] * back[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("conv2d matches a direct loop") {
  Rng rng(8);
  const int cin = 2, cout = 3, k = 4, s = 2, p = 1, h = 6;
  auto layer = initialized(Conv2d<double>(cin, cout, k, s, p));
  const auto x = test::random_tensor<double>({1, h, h, cin}, rng);
  const auto y = layer.forward(x, nullptr);
  const auto& w = *layer.params()[0];  // (k·k·cin) × cout
  const auto& b = *layer.params()[1];
  const int oh = (h + 2 * p - k) / s + 1;
  REQUIRE(y.shape() == Shape{1, oh, oh, cout});
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < oh; ++ox)
      for (int co = 0; co < cout; ++co) {
        double acc = b[co];
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            for (int ci = 0; ci < cin; ++ci) {
              const int iy = oy * s - p + ky, ix = ox * s - p + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= h) continue;
              acc += x[(iy * h + ix) * cin + ci] * w[((ky * k + kx) * cin + ci) * cout + co];
            }
        CHECK(y[(oy * oh + ox) * cout + co] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("transposed conv matches a direct scatter") {
  Rng rng(9);
  const int cin = 2, cout = 2, k = 4, s = 2, p = 1, h = 3;
  auto layer = initialized(ConvTranspose2d<double>(cin, cout, k, s, p));
  const auto x = test::random_tensor<double>({1, h, h, cin}, rng);
  const auto y = layer.forward(x, nullptr);
  const auto& w = *layer.params()[0];  // cin × (k·k·cout)
  const auto& b = *layer.params()[1];
  const int oh = (h - 1) * s - 2 * p + k;
  REQUIRE(y.shape() == Shape{1, oh, oh, cout});
  std::vector<double> ref(static_cast<std::size_t>(oh) * oh * cout, 0.0);
  for (int iy = 0; iy < h; ++iy)
    for (int ix = 0; ix < h; ++ix)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int oy = iy * s - p + ky, ox = ix * s - p + kx;
          if (oy < 0 || oy >= oh || ox < 0 || ox >= oh) continue;
          for (int ci = 0; ci < cin; ++ci)
            for (int co = 0; co < cout; ++co)
              ref[(oy * oh + ox) * cout + co] += x[(iy * h + ix) * cin + ci] * w[ci * k * k * cout + (ky * k + kx) * cout + co];
        }
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i] + b[i % cout]).epsilon(1e-12));
}

TEST_CASE("pixel norm gives unit mean square per position") {
  Rng rng(10);
  PixelNorm<double> l;
  const auto y = l.forward(test::random_tensor<double>({2, 3, 3, 8}, rng, -3, 3), nullptr);
  for (std::size_t pos = 0; pos < y.size() / 8; ++pos) {
    double ms = 0;
    for (int c = 0; c < 8; ++c) ms += y[pos * 8 + c] * y[pos * 8 + c] / 8;
    CHECK(ms == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("leaky relu kink pattern tracks sign changes") {
  LeakyReLU<double> l(0.2);
  LayerCache<double> c1, c2;
  l.forward(Tensor<double>({3}, {-1.0, 0.5, 2.0}), &c1);
  l.forward(Tensor<double>({3}, {-1.0, -0.5, 2.0}), &c2);
  std::vector<bool> k1, k2;
  l.kink_pattern(c1, k1);
  l.kink_pattern(c2, k2);
  CHECK(k1.size() == 3);
  CHECK(k1 != k2);
}

TEST_CASE("sequential copies are deep") {
  Rng rng(11);
  Sequential<float> a;
  a.emplace<Linear<float>>(3, 2);
  a.init(rng);
  Sequential<float> b = a;
  CHECK(*a.params()[0] == *b.params()[0]);
  CHECK(a.params()[0] != b.params()[0]);
  (*b.params()[0])[0] += 1.0f;
  CHECK_FALSE(*a.params()[0] == *b.params()[0]);
}

TEST_CASE("adam update") {
  Tensor<double> p({3}, {1.0, -2.0, 0.5});
  Tensor<double>* ps[] = {&p};
  AdamState<double> st;
  st.m = {Tensor<double>({3})};
  st.v = {Tensor<double>({3})};
  const AdamConfig cfg{0.1, 0.5, 0.999, 1e-8};
  const std::vector<Tensor<double>> g = {Tensor<double>({3}, {2.0, -0.5, 0.0})};

  SUBCASE("first step moves each parameter by lr against the gradient sign") {
    adam_update<double>(ps, g, st, cfg);
    CHECK(st.step == 1);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-7));
    CHECK(p[2] == 0.5);
  }
  SUBCASE("second step against a scalar recurrence") {
    adam_update<double>(ps, g, st, cfg);
    const std::vector<Tensor<double>> g2 = {Tensor<double>({3}, {-1.0, 1.0, 3.0})};
    adam_update<double>(ps, g2, st, cfg);
    const double g1[] = {2.0, -0.5, 0.0}, gg2[] = {-1.0, 1.0, 3.0}, p0[] = {1.0, -2.0, 0.5};
    for (int i = 0; i < 3; ++i) {
      double m = 0, v = 0, x = p0[i];
      for (int t = 1; t <= 2; ++t) {
        const double gi = t == 1 ? g1[i] : gg2[i];
        m = 0.5 * m + 0.5 * gi;
        v = 0.999 * v + 0.001 * gi * gi;
        x -= 0.1 * (m / (1 - std::pow(0.5, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      }
      CHECK(p[i] == doctest::Approx(x).epsilon(1e-12));
    }
  }
  SUBCASE("count mismatch") {
    const std::vector<Tensor<double>> none;
    CHECK_THROWS_AS(adam_update<double>(ps, none, st, cfg), std::logic_error);
  }
}
