#include <doctest.h>

#include <boost/rational.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "egan/losses.hpp"
#include "test_util.hpp"

using namespace egan;
using namespace egan::losses;

namespace {

Tensor<double> labels_with_positives(int m, int n_pos) {
  Tensor<double> y({m, 1});
  for (int i = 0; i < n_pos; ++i) y[i] = 1.0;
  return y;
}

// Straight loop over the definition, independent of the implementation.
double attribute_loss_oracle(const Tensor<double>& logits, const Tensor<double>& y, const std::vector<double>& wp,
                             const std::vector<double>& wn) {
  const int m = logits.dim(0), n = logits.dim(1);
  double sum = 0;
  for (int r = 0; r < m; ++r)
    for (int i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-logits[r * n + i]));
      const double t = y[r * n + i];
      sum += -wp[i] * t * std::log(std::max(s, 1e-7)) - wn[i] * (1 - t) * std::log(std::max(1 - s, 1e-7));
    }
  return sum / m;
}

Tensor<double> random_labels(int m, int n, nn::Rng& rng) {
  Tensor<double> y({m, n});
  std::bernoulli_distribution coin(0.5);
  for (auto& v : y.values()) v = coin(rng) ? 1.0 : 0.0;
  return y;
}

}  // namespace

TEST_CASE("selective weights for the documented batches") {
  auto w = selective_weights(labels_with_positives(64, 16));
  CHECK(w.w_p[0] == 2.0);
  CHECK(w.w_n[0] == doctest::Approx(64.0 / 96.0).epsilon(1e-15));
  CHECK(w.positives[0] == 16);

  w = selective_weights(labels_with_positives(64, 32));
  CHECK(w.w_p[0] == 1.0);
  CHECK(w.w_n[0] == 1.0);

  w = selective_weights(labels_with_positives(8, 0));
  CHECK(w.w_p[0] == 0.0);
  CHECK(w.w_n[0] == 1.0);

  w = selective_weights(labels_with_positives(8, 8));
  CHECK(w.w_p[0] == 1.0);
  CHECK(w.w_n[0] == 0.0);
}

TEST_CASE("weight balance identity holds for every non-degenerate count") {
  for (int m = 2; m <= 64; ++m)
    for (int n = 1; n < m; ++n) {
      const auto w = selective_weights(labels_with_positives(m, n));
      // Rational oracle: exact weights satisfy the identity exactly, and the
      // implementation returns their correctly rounded values.
      const boost::rational<long long> wp(m, 2 * n), wn(m, 2 * (m - n));
      CHECK(n * wp + (m - n) * wn == boost::rational<long long>(m));
      CHECK(w.w_p[0] == boost::rational_cast<double>(wp));
      CHECK(w.w_n[0] == boost::rational_cast<double>(wn));
      // In floating point the identity holds to within rounding of the products.
      CHECK(std::abs(n * w.w_p[0] + (m - n) * w.w_n[0] - m) <= 2 * std::numeric_limits<double>::epsilon() * m);
    }
}

TEST_CASE("selective weights reject bad input") {
  Tensor<double> y({4, 1}, {0, 1, 0.5, 1});
  CHECK_THROWS_AS(selective_weights(y), std::invalid_argument);
  CHECK_THROWS_AS(selective_weights(Tensor<double>({1, 2}, {1, 0})), std::invalid_argument);
}

TEST_CASE("attribute loss closed forms") {
  nn::Rng rng(1);
  const auto y = random_labels(16, 4, rng);
  Tensor<double> logits(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) logits[i] = y[i] == 1.0 ? 20.0 : -20.0;
  CHECK(attribute_loss(logits, y, selective_weights(y)) < 1e-6);

  SelectiveWeights unit{{1.0}, {1.0}, {1}, 1};
  CHECK(attribute_loss(Tensor<double>({1, 1}, {0.0}), Tensor<double>({1, 1}, {1.0}), unit) ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-12));
}

TEST_CASE("attribute loss matches a loop oracle on random batches") {
  nn::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = random_labels(32, 5, rng);
    const auto logits = test::random_tensor<double>({32, 5}, rng, -6, 6);
    const auto w = selective_weights(y);
    const double got = attribute_loss(logits, y, w);
    const double want = attribute_loss_oracle(logits, y, w.w_p, w.w_n);
    CHECK(std::abs(got - want) <= 1e-6 * std::abs(want));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("unit weights reduce to plain multi-label cross-entropy") {
  nn::Rng rng(3);
  const auto y = random_labels(10, 3, rng);
  const auto logits = test::random_tensor<double>({10, 3}, rng, -4, 4);
  SelectiveWeights ones{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 10};
  double bce = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = 1 / (1 + std::exp(-logits[i]));
    bce -= y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p);
  }
  CHECK(attribute_loss(logits, y, ones) == doctest::Approx(bce / 10).epsilon(1e-12));
}

TEST_CASE("losses are invariant to batch permutation") {
  nn::Rng rng(4);
  const auto y = random_labels(12, 3, rng);
  const auto logits = test::random_tensor<double>({12, 3}, rng, -3, 3);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<double> yp(y.shape()), lp(y.shape());
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 3; ++c) {
      yp[r * 3 + c] = y[perm[r] * 3 + c];
      lp[r * 3 + c] = logits[perm[r] * 3 + c];
    }
  CHECK(attribute_loss(lp, yp, selective_weights(yp)) ==
        doctest::Approx(attribute_loss(logits, y, selective_weights(y))).epsilon(1e-12));

  const auto d = test::random_tensor<double>({12}, rng, 0.05, 0.95);
  const auto f = test::random_tensor<double>({12}, rng, 0.05, 0.95);
  Tensor<double> dp({12}), fp({12});
  for (int r = 0; r < 12; ++r) {
    dp[r] = d[perm[r]];
    fp[r] = f[perm[r]];
  }
  CHECK(discriminator_loss(dp, fp) == doctest::Approx(discriminator_loss(d, f)).epsilon(1e-12));
  CHECK(generator_adversarial_loss(fp) == doctest::Approx(generator_adversarial_loss(f)).epsilon(1e-12));
  CHECK(connection_loss(dp, fp) == doctest::Approx(connection_loss(d, f)).epsilon(1e-12));
}

TEST_CASE("discriminator loss") {
  const Tensor<double> half({4}, {0.5, 0.5, 0.5, 0.5});
  CHECK(discriminator_loss(half, half) == doctest::Approx(2 * std::numbers::ln2).epsilon(1e-12));
  const Tensor<double> ones({2}, {1 - 1e-9, 1 - 1e-9}), zeros({2}, {1e-9, 1e-9});
  CHECK(discriminator_loss(ones, zeros) < 1e-8);

  nn::Rng rng(5);
  const auto real = test::random_tensor<double>({6}, rng, 0.1, 0.9);
  const auto fake = test::random_tensor<double>({6}, rng, 0.1, 0.9);
  const auto g = discriminator_loss_grad(real, fake);
  for (std::size_t i = 0; i < fake.size(); ++i) {
    auto up = fake, down = fake;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double fd = (discriminator_loss(real, up) - discriminator_loss(real, down)) / 2e-6;
    CHECK(fd > 0.0);
    CHECK(g.grad_fake[i] > 0.0);
    CHECK(g.grad_fake[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < real.size(); ++i) {
    auto up = real, down = real;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double fd = (discriminator_loss(up, fake) - discriminator_loss(down, fake)) / 2e-6;
    CHECK(g.grad_real[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("generator adversarial loss") {
  CHECK(generator_adversarial_loss(Tensor<double>({1}, {0.5})) == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
  CHECK(generator_adversarial_loss(Tensor<double>({1}, {1.0 - 1e-12})) < 1e-9);
  CHECK(generator_adversarial_loss(Tensor<double>({1}, {0.3})) > generator_adversarial_loss(Tensor<double>({1}, {0.7})));

  const Tensor<double> d({3}, {0.2, 0.5, 0.9});
  const auto g = generator_adversarial_loss_grad(d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto up = d, down = d;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    CHECK(g.grad[i] ==
          doctest::Approx((generator_adversarial_loss(up) - generator_adversarial_loss(down)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("generator attribute loss and the combined objective") {
  nn::Rng rng(6);
  const auto y = random_labels(8, 4, rng);
  Tensor<double> logits(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) logits[i] = y[i] == 1.0 ? 30.0 : -30.0;
  const auto w = selective_weights(y);
  CHECK(generator_attribute_loss(logits, y, w) < 1e-6);

  const auto l2 = test::random_tensor<double>({8, 4}, rng, -2, 2);
  CHECK(generator_attribute_loss(l2, y, w) == attribute_loss(l2, y, w));

  const double adv = 0.7, a = 1.3, at = 2.9;
  CHECK(combine_generator_loss(adv, a, at) == adv + a + at);
  CHECK(combine_generator_loss(adv, a, at, 0.5, 2.0) == doctest::Approx(adv + 0.5 * a + 2.0 * at).epsilon(1e-15));
}

TEST_CASE("attribute loss gradient matches central differences") {
  nn::Rng rng(7);
  const auto y = random_labels(6, 3, rng);
  const auto logits = test::random_tensor<double>({6, 3}, rng, -3, 3);
  const auto w = selective_weights(y);
  const auto g = attribute_loss_grad(logits, y, w);
  CHECK(g.value == attribute_loss(logits, y, w));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto up = logits, down = logits;
    up[i] += 1e-5;
    down[i] -= 1e-5;
    const double fd = (attribute_loss(up, y, w) - attribute_loss(down, y, w)) / 2e-5;
    CHECK(std::abs(g.grad[i] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-6));
  }
}

TEST_CASE("connection loss") {
  Tensor<double> z({2, 3}, {0.1, -0.4, 0.9, 0.0, 0.5, -1.0});
  CHECK(connection_loss(z, z) == 0.0);
  CHECK(connection_loss(Tensor<double>({1, 3}, {1, 1, 1}), Tensor<double>({1, 3}, {0, 0, 0})) == 1.0);
  auto other = z;
  other[4] += 0.25;
  CHECK(connection_loss(z, other) > 0.0);

  nn::Rng rng(8);
  const int m = 200000;
  const auto a = test::random_tensor<double>({m, 1}, rng);
  const auto b = test::random_tensor<double>({m, 1}, rng);
  // E|U - V| for independent U[-1,1] variables is 2/3; the standard error here is ~1e-3.
  CHECK(connection_loss(a, b) == doctest::Approx(2.0 / 3.0).epsilon(0.01));

  const auto zt = test::random_tensor<double>({4, 3}, rng);
  const auto zz = test::random_tensor<double>({4, 3}, rng);
  const auto g = connection_loss_grad(zz, zt);
  for (std::size_t i = 0; i < zt.size(); ++i) {
    auto up = zt, down = zt;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    CHECK(g.grad[i] == doctest::Approx((connection_loss(zz, up) - connection_loss(zz, down)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("loss shape errors") {
  const Tensor<double> a({2, 3}), b({3, 2});
  CHECK_THROWS_AS(connection_loss(a, b), DimensionError);
  SelectiveWeights w{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 2};
  CHECK_THROWS_AS(attribute_loss(a, b, w), DimensionError);
}
