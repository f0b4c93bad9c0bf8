#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "egan/dataset.hpp"
#include "egan/models.hpp"

namespace egan::metrics {

struct FeatureDistribution {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased (n - 1)
  int count = 0;

  int dim() const { return static_cast<int>(mean.size()); }
  /// Fewer samples than feature dimensions: the covariance is rank deficient.
  bool undersampled() const { return count < dim(); }
};

/// Rows are samples.
FeatureDistribution feature_distribution(const Eigen::MatrixXd& features);

/// Maps M×H×W×3 images to M×d features.
using FeatureExtractor = std::function<Tensor<float>(const Tensor<float>&)>;

Eigen::MatrixXd extract_feature_matrix(const Tensor<float>& images, const FeatureExtractor& extractor,
                                       int chunk = 64);
FeatureDistribution extract_features(const Tensor<float>& images, const FeatureExtractor& extractor);

/// |μa-μb|² + Tr(Σa + Σb - 2 (Σa Σb)^½), with the square root taken through
/// the symmetric matrix Σa^½ Σb Σa^½.
double compute_fid(const FeatureDistribution& a, const FeatureDistribution& b);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation
  int count = 0;
};
MeanStd mean_std(std::span<const double> values);

/// FID between `repetitions` random subsets (without replacement) of both
/// feature pools.
MeanStd repeated_fid(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b, int samples,
                     int repetitions, nn::Rng& rng);

/// Windowed SSIM on images mapped from [-1,1] to [0,1]: 11×11 Gaussian window,
/// sigma 1.5, C1 = (0.01)², C2 = (0.03)², valid windows only, averaged over
/// windows and channels. Inputs are H×W×C.
double ssim(const Tensor<float>& x, const Tensor<float>& y);

inline constexpr double kPsnrPeak = 2.0;
/// 10·log10(4 / MSE) on [-1,1] images; +inf when the images are identical.
double psnr(const Tensor<float>& x, const Tensor<float>& y);

/// Pixel statistics behind the synthetic attributes, in [0,1] luminance units.
struct OracleStatistics {
  double red_excess = 0;        // mean(R) - mean(G, B)
  double outer_level = 0;       // mean luminance of the outer ring
  double reference_level = 0;   // mean luminance of the band just inside it
  double shape_pixels = 0;      // interior pixels deviating from the reference level
};

inline constexpr double kRedThreshold = 0.1125;
inline constexpr double kBorderThreshold = 0.25;
inline constexpr double kBrightThreshold = 0.475;
inline constexpr double kShapeDeviation = 0.225;
inline constexpr double kLargeShapePixels = 100.0;  // at 32×32; scales with area

OracleStatistics oracle_statistics(const Tensor<float>& image);
std::vector<float> oracle_decide(const OracleStatistics& stats, int resolution);
/// Decides the four synthetic attributes of one H×W×3 image.
std::vector<float> analytic_attribute_oracle(const Tensor<float>& image);
/// Row-wise over M×H×W×3; M×4.
Tensor<float> oracle_predict(const Tensor<float>& images);

struct EvalClassifierConfig {
  int channels = 16;
  int features = 64;
  int steps = 1500;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 3;
};

nlohmann::json to_json(const EvalClassifierConfig& config);

/// Attribute classifier with residual blocks, trained with selective weights.
/// Independent of the training-time classifier C.
class EvalClassifier {
 public:
  EvalClassifier() = default;
  EvalClassifier(const EvalClassifierConfig& config, AttributeSchema schema, int resolution);

  /// M×n_a logits and M×features hidden vectors.
  FeatureNet::Output forward(const Tensor<float>& images) const;
  Tensor<float> predict(const Tensor<float>& images) const;
  Tensor<float> features(const Tensor<float>& images) const;
  /// Per-attribute accuracy against stored labels.
  std::vector<double> accuracy(const Dataset& data) const;

  FeatureNet& net() { return net_; }
  const FeatureNet& net() const { return net_; }
  const AttributeSchema& schema() const { return schema_; }
  const EvalClassifierConfig& config() const { return config_; }
  int resolution() const { return resolution_; }
  nlohmann::json& provenance() { return provenance_; }
  const nlohmann::json& provenance() const { return provenance_; }

  void save(const std::filesystem::path& dir) const;
  static EvalClassifier load(const std::filesystem::path& dir);

 private:
  EvalClassifierConfig config_;
  AttributeSchema schema_;
  int resolution_ = 0;
  FeatureNet net_;
  nlohmann::json provenance_ = nlohmann::json::object();
};

EvalClassifier train_eval_classifier(const Dataset& train, const EvalClassifierConfig& config,
                                     const Dataset* held_out = nullptr);

/// Maps images to M×n_a binary decisions.
using AttributeJudge = std::function<Tensor<float>(const Tensor<float>&)>;

struct EditAccuracy {
  std::vector<double> per_attribute;  // target value detected after editing attribute i
  std::vector<double> preserved;      // other attributes keep their source value when editing i
  int images = 0;

  double mean() const;
  double min() const;
};

enum class EditPlan { flip, keep };

/// Single-attribute plan: for each attribute i and image, set entry i to its
/// complement (flip) or its current value (keep) and judge the edited image.
EditAccuracy edit_accuracy(const ModelState& state, const AttributeJudge& judge, const Tensor<float>& images,
                           const Tensor<float>& labels, EditPlan plan = EditPlan::flip);

}  // namespace egan::metrics
