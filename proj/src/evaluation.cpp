#include "egan/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "egan/editing.hpp"

namespace egan::evaluation {

void EvaluationConfig::validate() const {
  if (fid_samples < 2) throw std::invalid_argument("evaluate: fid_samples must be at least 2");
  if (fid_pool < fid_samples) throw std::invalid_argument("evaluate: fid_pool must be at least fid_samples");
  if (fid_repetitions < 1) throw std::invalid_argument("evaluate: fid_repetitions must be positive");
  if (inversion_samples < 1) throw std::invalid_argument("evaluate: inversion_samples must be positive");
}

nlohmann::json to_json(const EvaluationConfig& c) {
  return {{"fid_samples", c.fid_samples},
          {"fid_pool", c.fid_pool},
          {"fid_repetitions", c.fid_repetitions},
          {"inversion_samples", c.inversion_samples},
          {"seed", c.seed},
          {"classifier", metrics::to_json(c.classifier)}};
}

bool oracle_applies(const AttributeSchema& schema, int resolution) {
  return schema == synthetic::schema() && (resolution == 32 || resolution == 64);
}

namespace {

nlohmann::json named(const AttributeSchema& schema, const std::vector<double>& values) {
  nlohmann::json j = nlohmann::json::object();
  for (int a = 0; a < schema.count(); ++a) j[schema.names[a]] = values[a];
  return j;
}

nlohmann::json to_json(const metrics::MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.count}}; }

nlohmann::json edit_report(const AttributeSchema& schema, const metrics::EditAccuracy& acc, const char* judge) {
  return {{"judge", judge},
          {"per_attribute", named(schema, acc.per_attribute)},
          {"preserved", named(schema, acc.preserved)},
          {"mean", acc.mean()},
          {"min", acc.min()},
          {"images", acc.images}};
}

Tensor<float> all_images(const Dataset& d, Tensor<float>* labels = nullptr) {
  std::vector<int> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  Batch b = make_batch(d, idx);
  if (labels) *labels = std::move(b.attributes);
  return std::move(b.images);
}

}  // namespace

nlohmann::json evaluate(const Checkpoint& checkpoint, const Dataset& train, const Dataset& test,
                        const EvaluationConfig& config, const metrics::EvalClassifier* classifier) {
  config.validate();
  const ModelState& s = checkpoint.state;
  const AttributeSchema& schema = checkpoint.schema;
  if (train.schema != schema || test.schema != schema)
    throw std::invalid_argument("evaluate: dataset attributes do not match the checkpoint");
  if (test.size() < 2 || train.size() < 2) throw std::invalid_argument("evaluate: need at least 2 images per split");
  const int res = s.config.resolution;
  if (train.resolution() != res || test.resolution() != res)
    throw DimensionError("evaluate: dataset resolution differs from the checkpoint's " + std::to_string(res));

  std::optional<metrics::EvalClassifier> trained;
  if (!classifier) {
    trained = metrics::train_eval_classifier(train, config.classifier, &test);
    classifier = &*trained;
  }

  nlohmann::json report;
  report["checkpoint"] = checkpoint.id();
  report["step"] = s.step;
  report["config"] = to_json(config);
  report["attributes"] = schema.names;
  report["held_out_images"] = test.size();

  nn::Rng rng(config.seed);

  // Distribution quality: FID in the evaluation classifier's feature space.
  const metrics::FeatureExtractor features = [&](const Tensor<float>& x) { return classifier->features(x); };
  const Eigen::MatrixXd real = metrics::extract_feature_matrix(all_images(train), features);
  const Tensor<float> z = sample_latent(config.fid_pool, s.config.d_z, rng);
  const Tensor<float> y = sample_random_attributes(config.fid_pool, schema, rng);
  const Eigen::MatrixXd generated = metrics::extract_feature_matrix(editing::generate_novel(s, z, y), features);
  Tensor<float> noise({config.fid_pool, res, res, 3});
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : noise.values()) v = u(rng);
  const Eigen::MatrixXd noise_features = metrics::extract_feature_matrix(noise, features);
  const int samples = std::min(config.fid_samples, static_cast<int>(real.rows()));
  const auto fid_gen = metrics::repeated_fid(generated, real, samples, config.fid_repetitions, rng);
  const auto fid_noise = metrics::repeated_fid(noise_features, real, samples, config.fid_repetitions, rng);
  report["fid"] = {{"generated", to_json(fid_gen)},
                   {"noise_baseline", to_json(fid_noise)},
                   {"ratio", fid_noise.mean > 0 ? fid_gen.mean / fid_noise.mean : 0.0},
                   {"samples", samples},
                   {"feature_extractor", "eval_classifier"}};

  // Reconstruction of held-out images, with their labels as y.
  Tensor<float> labels;
  const Tensor<float> x = all_images(test, &labels);
  const Tensor<float> rec = editing::reconstruct(s, x, &labels);
  std::vector<double> ssim, psnr;
  for (int i = 0; i < x.dim(0); ++i) {
    ssim.push_back(metrics::ssim(rec.row(i), x.row(i)));
    psnr.push_back(metrics::psnr(rec.row(i), x.row(i)));
  }
  report["reconstruction"] = {{"ssim", to_json(metrics::mean_std(ssim))}, {"psnr", to_json(metrics::mean_std(psnr))}};

  // Single-attribute edits of held-out images.
  if (oracle_applies(schema, res))
    report["edit_accuracy"] = edit_report(schema, metrics::edit_accuracy(s, metrics::oracle_predict, x, labels), "oracle");
  const metrics::AttributeJudge judge = [&](const Tensor<float>& im) { return classifier->predict(im); };
  report["edit_accuracy_eval_classifier"] =
      edit_report(schema, metrics::edit_accuracy(s, judge, x, labels), "eval_classifier");

  report["eval_classifier"] = {{"held_out_accuracy", named(schema, classifier->accuracy(test))},
                               {"provenance", classifier->provenance()}};

  // C_n against fresh generator samples.
  const Tensor<float> zi = sample_latent(config.inversion_samples, s.config.d_z, rng);
  const Tensor<float> yi = sample_random_attributes(config.inversion_samples, schema, rng);
  const Tensor<float> zt = editing::invert_image(s, editing::generate_novel(s, zi, yi), &yi);
  double err = 0;
  for (std::size_t i = 0; i < zi.size(); ++i) err += std::abs(zi[i] - zt[i]);
  report["inversion"] = {{"mean_abs_error", err / zi.size()},
                         {"independent_baseline", 2.0 / 3.0},
                         {"samples", config.inversion_samples}};

  const auto mean_d = [&](const Tensor<float>& images) {
    const auto out = s.discriminator.forward(images, nullptr).out;
    double m = 0;
    for (float v : out.values()) m += v;
    return m / out.size();
  };
  report["discriminator"] = {{"held_out_real_mean", mean_d(x)},
                             {"generated_mean", mean_d(editing::generate_novel(s, zi.rows(0, std::min(256, zi.dim(0))),
                                                                              yi.rows(0, std::min(256, yi.dim(0)))))}};
  return report;
}

std::string format_report(const nlohmann::json& r) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4);
  const auto ms = [](const nlohmann::json& j) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << j.at("mean").get<double>() << " ± " << j.at("std").get<double>();
    return s.str();
  };
  const auto names = r.at("attributes").get<std::vector<std::string>>();
  o << "checkpoint  " << r.at("checkpoint").get<std::string>() << " (step " << r.at("step") << ")\n";
  const auto& fid = r.at("fid");
  o << "FID         " << ms(fid.at("generated")) << " over " << fid.at("generated").at("n") << " repetitions of "
    << fid.at("samples") << " vs " << fid.at("samples") << "\n";
  o << "FID noise   " << ms(fid.at("noise_baseline")) << "  (ratio " << fid.at("ratio").get<double>() << ")\n";
  o << "SSIM        " << ms(r.at("reconstruction").at("ssim")) << "\n";
  o << "PSNR        " << ms(r.at("reconstruction").at("psnr")) << " dB\n";
  for (const char* key : {"edit_accuracy", "edit_accuracy_eval_classifier"}) {
    if (!r.contains(key)) continue;
    const auto& e = r.at(key);
    o << "edits (" << e.at("judge").get<std::string>() << ")\n";
    for (const auto& name : names)
      o << "  " << std::left << std::setw(20) << name << std::right << e.at("per_attribute").at(name).get<double>()
        << "  preserved " << e.at("preserved").at(name).get<double>() << "\n";
  }
  o << "eval classifier held-out accuracy\n";
  for (const auto& name : names)
    o << "  " << std::left << std::setw(20) << name << std::right
      << r.at("eval_classifier").at("held_out_accuracy").at(name).get<double>() << "\n";
  o << "inversion   " << r.at("inversion").at("mean_abs_error").get<double>() << " mean |z - z~| (independent "
    << r.at("inversion").at("independent_baseline").get<double>() << ")\n";
  o << "D(real)     " << r.at("discriminator").at("held_out_real_mean").get<double>() << "   D(G) "
    << r.at("discriminator").at("generated_mean").get<double>() << "\n";
  return o.str();
}

}  // namespace egan::evaluation
