#include "egan/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "egan/checkpoint.hpp"
#include "egan/editing.hpp"
#include "egan/losses.hpp"

namespace egan::metrics {
namespace fs = std::filesystem;

FeatureDistribution feature_distribution(const Eigen::MatrixXd& f) {
  if (f.rows() < 2) throw std::invalid_argument("feature_distribution: need at least 2 samples");
  FeatureDistribution d;
  d.count = static_cast<int>(f.rows());
  d.mean = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - d.mean.transpose();
  d.covariance = (centered.transpose() * centered) / static_cast<double>(f.rows() - 1);
  d.covariance = 0.5 * (d.covariance + d.covariance.transpose()).eval();
  return d;
}

Eigen::MatrixXd extract_feature_matrix(const Tensor<float>& images, const FeatureExtractor& extractor, int chunk) {
  if (images.rank() != 4) throw DimensionError("extract_features: expected M×H×W×3 images");
  const int m = images.dim(0);
  Eigen::MatrixXd out;
  for (int b = 0; b < m; b += chunk) {
    const Tensor<float> f = extractor(images.rows(b, std::min(m, b + chunk)));
    if (f.rank() != 2 || f.dim(0) != std::min(m, b + chunk) - b)
      throw DimensionError("extract_features: extractor returned " + shape_string(f.shape()));
    if (b == 0) out.resize(m, f.dim(1));
    for (int r = 0; r < f.dim(0); ++r)
      for (int c = 0; c < f.dim(1); ++c) out(b + r, c) = f[static_cast<std::size_t>(r) * f.dim(1) + c];
  }
  return out;
}

FeatureDistribution extract_features(const Tensor<float>& images, const FeatureExtractor& extractor) {
  return feature_distribution(extract_feature_matrix(images, extractor));
}

namespace {

// Symmetric PSD square root with small negative eigenvalues clipped at zero.
bool psd_sqrt(const Eigen::MatrixXd& a, Eigen::MatrixXd& out) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) return false;
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return out.allFinite();
}

bool trace_sqrt_product(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb, double& trace) {
  Eigen::MatrixXd root_a;
  if (!psd_sqrt(sa, root_a)) return false;
  Eigen::MatrixXd inner = root_a * sb * root_a;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return false;
  trace = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::isfinite(trace);
}

}  // namespace

double compute_fid(const FeatureDistribution& a, const FeatureDistribution& b) {
  if (a.dim() != b.dim() || a.covariance.rows() != a.dim() || b.covariance.rows() != b.dim())
    throw DimensionError("compute_fid: feature dimensions differ (" + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()) + ")");
  double tr_sqrt = 0;
  if (!trace_sqrt_product(a.covariance, b.covariance, tr_sqrt)) {
    const Eigen::MatrixXd jitter = 1e-6 * Eigen::MatrixXd::Identity(a.dim(), a.dim());
    if (!trace_sqrt_product(a.covariance + jitter, b.covariance + jitter, tr_sqrt))
      throw std::runtime_error("compute_fid: covariance square root failed");
  }
  const double fid =
      (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
  return std::max(fid, 0.0);
}

MeanStd mean_std(std::span<const double> v) {
  MeanStd r;
  r.count = static_cast<int>(v.size());
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / (v.size() - 1));
  }
  return r;
}

MeanStd repeated_fid(const Eigen::MatrixXd& fa, const Eigen::MatrixXd& fb, int samples, int repetitions,
                     nn::Rng& rng) {
  if (repetitions < 1) throw std::invalid_argument("repeated_fid: repetitions must be positive");
  auto subset = [&](const Eigen::MatrixXd& f) {
    const int n = static_cast<int>(f.rows());
    const int k = std::min(samples, n);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) std::swap(idx[i], idx[std::uniform_int_distribution<int>(i, n - 1)(rng)]);
    Eigen::MatrixXd out(k, f.cols());
    for (int i = 0; i < k; ++i) out.row(i) = f.row(idx[i]);
    return out;
  };
  std::vector<double> values;
  for (int r = 0; r < repetitions; ++r)
    values.push_back(compute_fid(feature_distribution(subset(fa)), feature_distribution(subset(fb))));
  return mean_std(values);
}

double ssim(const Tensor<float>& x, const Tensor<float>& y) {
  if (x.shape() != y.shape() || x.rank() != 3)
    throw DimensionError("ssim: expected two H×W×C images of equal shape, got " + shape_string(x.shape()) + " and " +
                         shape_string(y.shape()));
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  if (h < kWin || w < kWin) throw DimensionError("ssim: images smaller than the 11×11 window");
  double g[kWin], gsum = 0;
  for (int i = 0; i < kWin; ++i) gsum += g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * kSigma * kSigma));
  for (double& v : g) v /= gsum;

  auto at = [&](const Tensor<float>& t, int r, int c, int k) {
    return (static_cast<double>(t[(static_cast<std::size_t>(r) * w + c) * ch + k]) + 1.0) / 2.0;
  };
  double total = 0;
  for (int k = 0; k < ch; ++k)
    for (int r0 = 0; r0 + kWin <= h; ++r0)
      for (int c0 = 0; c0 + kWin <= w; ++c0) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            const double wt = g[i] * g[j], a = at(x, r0 + i, c0 + j, k), b = at(y, r0 + i, c0 + j, k);
            mx += wt * a;
            my += wt * b;
            // Same grouping in all three sums: ssim(x, y) == ssim(y, x) and ssim(x, x) == 1 exactly.
            sxx += wt * (a * a);
            syy += wt * (b * b);
            sxy += wt * (a * b);
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
  return total / (static_cast<double>(ch) * (h - kWin + 1) * (w - kWin + 1));
}

double psnr(const Tensor<float>& x, const Tensor<float>& y) {
  if (x.shape() != y.shape() || x.empty()) throw DimensionError("psnr: images differ in shape");
  double se = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kPsnrPeak * kPsnrPeak / (se / static_cast<double>(x.size())));
}

OracleStatistics oracle_statistics(const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(2) != 3 || img.dim(0) != img.dim(1))
    throw DimensionError("oracle: expected a square H×W×3 image, got " + shape_string(img.shape()));
  const int res = img.dim(0);
  const double s = res / 32.0;
  auto level = [&](int y, int x, int c) { return (img[(static_cast<std::size_t>(y) * res + x) * 3 + c] + 1.0) / 2.0; };
  auto lum = [&](int y, int x) { return (level(y, x, 0) + level(y, x, 1) + level(y, x, 2)) / 3.0; };
  auto edge = [&](int y, int x) { return std::min({x + 0.5, y + 0.5, res - x - 0.5, res - y - 0.5}); };

  OracleStatistics st;
  double r = 0, gb = 0, outer = 0, ref = 0;
  int n_outer = 0, n_ref = 0;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      r += level(y, x, 0);
      gb += 0.5 * (level(y, x, 1) + level(y, x, 2));
      const double e = edge(y, x);
      if (e < 2 * s) {
        outer += lum(y, x);
        ++n_outer;
      } else if (e < 4 * s) {
        ref += lum(y, x);
        ++n_ref;
      }
    }
  st.red_excess = (r - gb) / (res * res);
  st.outer_level = outer / n_outer;
  st.reference_level = ref / n_ref;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x)
      if (edge(y, x) >= 4 * s && std::abs(lum(y, x) - st.reference_level) > kShapeDeviation) st.shape_pixels += 1;
  return st;
}

std::vector<float> oracle_decide(const OracleStatistics& st, int resolution) {
  const double s = resolution / 32.0;
  return {st.red_excess > kRedThreshold ? 1.0f : 0.0f, st.shape_pixels > kLargeShapePixels * s * s ? 1.0f : 0.0f,
          std::abs(st.outer_level - st.reference_level) > kBorderThreshold ? 1.0f : 0.0f,
          st.reference_level > kBrightThreshold ? 1.0f : 0.0f};
}

std::vector<float> analytic_attribute_oracle(const Tensor<float>& image) {
  return oracle_decide(oracle_statistics(image), image.dim(0));
}

Tensor<float> oracle_predict(const Tensor<float>& images) {
  if (images.rank() != 4) throw DimensionError("oracle: expected M×H×W×3 images");
  Tensor<float> out({images.dim(0), 4});
  for (int i = 0; i < images.dim(0); ++i) {
    const auto v = analytic_attribute_oracle(images.row(i));
    std::copy(v.begin(), v.end(), out.data() + static_cast<std::size_t>(i) * 4);
  }
  return out;
}

namespace {

FeatureNet make_residual_classifier(const EvalClassifierConfig& cfg, int n_a, int resolution) {
  constexpr float kSlope = 0.2f;
  auto block = [&](int c) {
    nn::Sequential<float> body;
    body.emplace<nn::Conv2d<float>>(c, c, 3, 1, 1);
    body.emplace<nn::LeakyReLU<float>>(kSlope);
    body.emplace<nn::Conv2d<float>>(c, c, 3, 1, 1);
    return std::make_unique<nn::Residual<float>>(std::move(body), kSlope);
  };
  const int depth = std::bit_width(static_cast<unsigned>(resolution)) - 3;
  nn::Sequential<float> trunk;
  int c = cfg.channels;
  trunk.emplace<nn::Conv2d<float>>(3, c, 4, 2, 1);
  trunk.emplace<nn::LeakyReLU<float>>(kSlope);
  trunk.add(block(c));
  for (int i = 1; i < depth; ++i) {
    trunk.emplace<nn::Conv2d<float>>(c, 2 * c, 4, 2, 1);
    trunk.emplace<nn::LeakyReLU<float>>(kSlope);
    c *= 2;
    trunk.add(block(c));
  }
  trunk.emplace<nn::Reshape<float>>(Shape{4 * 4 * c});
  trunk.emplace<nn::Linear<float>>(4 * 4 * c, cfg.features);
  trunk.emplace<nn::LeakyReLU<float>>(kSlope);
  nn::Sequential<float> head;
  head.emplace<nn::Linear<float>>(cfg.features, n_a);
  return FeatureNet(std::move(trunk), std::move(head), resolution);
}

}  // namespace

nlohmann::json to_json(const EvalClassifierConfig& c) {
  return {{"channels", c.channels}, {"features", c.features}, {"steps", c.steps},
          {"batch_size", c.batch_size}, {"lr", c.lr}, {"seed", c.seed}};
}

EvalClassifier::EvalClassifier(const EvalClassifierConfig& config, AttributeSchema schema, int resolution)
    : config_(config), schema_(std::move(schema)), resolution_(resolution) {
  schema_.validate();
  if (resolution != 32 && resolution != 64) throw std::invalid_argument("eval classifier: resolution must be 32 or 64");
  if (config.channels < 1 || config.features < 1) throw std::invalid_argument("eval classifier: bad widths");
  net_ = make_residual_classifier(config, schema_.count(), resolution);
  nn::Rng rng(config.seed);
  net_.init(rng);
}

FeatureNet::Output EvalClassifier::forward(const Tensor<float>& images) const {
  std::vector<Tensor<float>> outs, feats;
  for (int b = 0; b < images.dim(0); b += 64) {
    auto o = net_.forward(images.rows(b, std::min(images.dim(0), b + 64)), nullptr);
    outs.push_back(std::move(o.out));
    feats.push_back(std::move(o.features));
  }
  return {concat_rows<float>(outs), concat_rows<float>(feats)};
}

Tensor<float> EvalClassifier::predict(const Tensor<float>& images) const {
  Tensor<float> p = forward(images).out;
  for (auto& v : p.values()) v = v > 0.0f ? 1.0f : 0.0f;
  return p;
}

Tensor<float> EvalClassifier::features(const Tensor<float>& images) const { return forward(images).features; }

std::vector<double> EvalClassifier::accuracy(const Dataset& data) const {
  std::vector<int> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const Batch b = make_batch(data, all);
  const Tensor<float> p = predict(b.images);
  const int n = schema_.count();
  std::vector<double> acc(n, 0.0);
  for (int i = 0; i < data.size(); ++i)
    for (int a = 0; a < n; ++a) {
      const std::size_t k = static_cast<std::size_t>(i) * n + a;
      acc[a] += p[k] == b.attributes[k];
    }
  for (auto& v : acc) v /= data.size();
  return acc;
}

void EvalClassifier::save(const fs::path& dir) const {
  fs::create_directories(dir);
  ParameterBlob blob;
  blob.names = net_.param_names();
  for (const auto* p : net_.params()) blob.tensors.push_back(*p);
  write_blob(dir / "eval_classifier.bin", blob);
  nlohmann::json j = {{"config", to_json(config_)},
                      {"schema", schema_.names},
                      {"resolution", resolution_},
                      {"provenance", provenance_}};
  std::ofstream(dir / "eval_classifier.json") << j.dump(2) << '\n';
}

EvalClassifier EvalClassifier::load(const fs::path& dir) {
  std::ifstream f(dir / "eval_classifier.json");
  if (!f) throw std::runtime_error("no evaluation classifier at " + dir.string());
  const auto j = nlohmann::json::parse(f);
  EvalClassifierConfig c;
  const auto& jc = j.at("config");
  c.channels = jc.at("channels");
  c.features = jc.at("features");
  c.steps = jc.at("steps");
  c.batch_size = jc.at("batch_size");
  c.lr = jc.at("lr");
  c.seed = jc.at("seed");
  EvalClassifier e(c, AttributeSchema{j.at("schema").get<std::vector<std::string>>()}, j.at("resolution"));
  e.provenance_ = j.value("provenance", nlohmann::json::object());
  const ParameterBlob blob = read_blob(dir / "eval_classifier.bin");
  auto params = e.net_.params();
  const auto names = e.net_.param_names();
  if (blob.tensors.size() != params.size()) throw std::runtime_error("eval classifier: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (blob.names[i] != names[i] || blob.tensors[i].shape() != params[i]->shape())
      throw std::runtime_error("eval classifier: unexpected tensor " + blob.names[i]);
    *params[i] = blob.tensors[i];
  }
  return e;
}

EvalClassifier train_eval_classifier(const Dataset& train, const EvalClassifierConfig& config,
                                     const Dataset* held_out) {
  EvalClassifier e(config, train.schema, train.resolution());
  FeatureNet& net = e.net();
  nn::AdamConfig adam;
  adam.lr = config.lr;
  adam.beta1 = 0.9;
  nn::AdamState<float> state;
  for (const auto* p : net.params()) {
    state.m.emplace_back(p->shape());
    state.v.emplace_back(p->shape());
  }
  nn::Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  double last_loss = 0;
  for (int step = 0; step < config.steps; ++step) {
    const Batch b = sample_batch(train, config.batch_size, rng);
    FeatureNet::Trace trace;
    const auto out = net.forward(b.images, &trace);
    const auto loss = losses::attribute_loss_grad(out.out, b.attributes, losses::selective_weights(b.attributes));
    auto grads = net.zero_grads();
    net.backward(loss.grad, nullptr, trace, &grads, false);
    const auto params = net.params();
    nn::adam_update<float>(params, grads, state, adam);
    last_loss = loss.value;
  }
  e.provenance() = {{"trained_on", train.size()}, {"final_loss", last_loss}, {"config", to_json(config)}};
  if (held_out && held_out->size() > 0) e.provenance()["held_out_accuracy"] = e.accuracy(*held_out);
  return e;
}

double EditAccuracy::mean() const {
  return per_attribute.empty() ? 0.0
                               : std::accumulate(per_attribute.begin(), per_attribute.end(), 0.0) / per_attribute.size();
}

double EditAccuracy::min() const {
  return per_attribute.empty() ? 0.0 : *std::min_element(per_attribute.begin(), per_attribute.end());
}

EditAccuracy edit_accuracy(const ModelState& state, const AttributeJudge& judge, const Tensor<float>& images,
                           const Tensor<float>& labels, EditPlan plan) {
  const int m = images.dim(0), n = state.config.n_a;
  if (labels.shape() != Shape{m, n}) throw DimensionError("edit_accuracy: labels must be M×n_a");
  EditAccuracy acc;
  acc.images = m;
  for (int a = 0; a < n; ++a) {
    Tensor<float> target = labels;
    if (plan == EditPlan::flip)
      for (int i = 0; i < m; ++i) {
        float& v = target[static_cast<std::size_t>(i) * n + a];
        v = 1.0f - v;
      }
    const Tensor<float> pred = judge(editing::edit_attributes(state, images, target, &labels));
    int hit = 0, kept = 0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        if (j == a)
          hit += pred[k] == target[k];
        else
          kept += pred[k] == labels[k];
      }
    acc.per_attribute.push_back(static_cast<double>(hit) / m);
    acc.preserved.push_back(n > 1 ? static_cast<double>(kept) / (static_cast<double>(m) * (n - 1)) : 1.0);
  }
  return acc;
}

}  // namespace egan::metrics
