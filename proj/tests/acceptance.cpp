// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
//
//   acceptance [--work DIR] [--only name,name] [--reuse]
//
// --reuse keeps a finished desk-scale run in DIR instead of retraining.

#include <sys/wait.h>

#include <boost/rational.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "egan/checkpoint.hpp"
#include "egan/config.hpp"
#include "egan/editing.hpp"
#include "egan/evaluation.hpp"
#include "egan/image_io.hpp"
#include "egan/losses.hpp"
#include "egan/metrics.hpp"
#include "egan/service.hpp"
#include "egan/training.hpp"
#include "test_util.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen's parameter names.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace egan;
using nlohmann::json;

namespace {

/// Collects individual checks; the criterion passes when all of them do.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) ++failed_;
    lines_.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
  }
  void note(const std::string& line) { lines_.push_back("      " + line); }
  bool passed() const { return failed_ == 0; }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  int failed_ = 0;
  std::vector<std::string> lines_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o << std::setprecision(precision) << v;
  return o.str();
}

struct Context {
  fs::path work;
  bool reuse = false;
  fs::path e2e_run;  // set once the desk-scale run exists
};

// ---------------------------------------------------------------------------
// Loss suite

Tensor<double> labels_with_positives(int m, int n) {
  Tensor<double> y({m, 1});
  for (int i = 0; i < n; ++i) y[i] = 1.0;
  return y;
}

double attribute_loss_oracle(const Tensor<double>& logits, const Tensor<double>& y, const losses::SelectiveWeights& w) {
  const int m = logits.dim(0), n = logits.dim(1);
  double sum = 0;
  for (int r = 0; r < m; ++r)
    for (int i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-logits[r * n + i]));
      const double t = y[r * n + i];
      sum += -w.w_p[i] * t * std::log(std::max(s, 1e-7)) - w.w_n[i] * (1 - t) * std::log(std::max(1 - s, 1e-7));
    }
  return sum / m;
}

void loss_suite(Context&, Checks& c) {
  using boost::rational;
  int pairs = 0, exact = 0;
  for (int m = 2; m <= 64; ++m)
    for (int n = 1; n < m; ++n) {
      ++pairs;
      const auto w = losses::selective_weights(labels_with_positives(m, n));
      const rational<long long> wp(m, 2 * n), wn(m, 2 * (m - n));
      exact += n * wp + (m - n) * wn == rational<long long>(m) && w.w_p[0] == boost::rational_cast<double>(wp) &&
               w.w_n[0] == boost::rational_cast<double>(wn);
    }
  c.expect(exact == pairs, "N·w_p + (M−N)·w_n = M exactly (rationals) with correctly rounded weights: " +
                               std::to_string(exact) + "/" + std::to_string(pairs) + " pairs, M = 2..64");

  nn::Rng rng(1);
  std::normal_distribution<double> g(0.0, 3.0);
  std::bernoulli_distribution coin(0.5);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + trial % 63, n = 1 + trial % 7;
    Tensor<double> logits({m, n}), y({m, n});
    for (auto& v : logits.values()) v = g(rng);
    for (auto& v : y.values()) v = coin(rng) ? 1.0 : 0.0;
    const auto w = losses::selective_weights(y);
    const double a = losses::attribute_loss(logits, y, w), b = attribute_loss_oracle(logits, y, w);
    worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
  }
  c.expect(worst < 1e-6, "attribute_loss vs scalar double oracle, 200 random batches: max rel err " + fmt(worst));

  auto w = losses::selective_weights(labels_with_positives(64, 16));
  c.expect(w.w_p[0] == 2.0 && w.w_n[0] == 64.0 / 96.0, "M=64, N=16 → w_p = 2, w_n = 64/96");
  w = losses::selective_weights(labels_with_positives(64, 32));
  c.expect(w.w_p[0] == 1.0 && w.w_n[0] == 1.0, "M=64, N=32 → w_p = w_n = 1");
  w = losses::selective_weights(labels_with_positives(8, 0));
  c.expect(w.w_p[0] == 0.0 && w.w_n[0] == 1.0, "M=8, N=0 → w_p = 0, w_n = 1");

  Tensor<double> y({4, 2}, std::vector<double>{1, 0, 0, 1, 1, 1, 0, 0});
  Tensor<double> perfect({4, 2});
  for (std::size_t i = 0; i < y.size(); ++i) perfect[i] = y[i] == 1.0 ? 20.0 : -20.0;
  const auto wy = losses::selective_weights(y);
  c.expect(losses::attribute_loss(perfect, y, wy) < 1e-6, "logits ±20 matching labels → L_C < 1e-6");
  losses::SelectiveWeights unit{{1.0}, {1.0}, {1}, 1};
  const double ln2 = std::log(2.0);
  c.expect(losses::attribute_loss(Tensor<double>({1, 1}, 0.0), Tensor<double>({1, 1}, 1.0), unit) == ln2,
           "one sample, y = 1, σ = 0.5 → L_C = ln 2");

  const Tensor<double> half({8}, 0.5);
  c.expect(losses::discriminator_loss(half, half) == 2 * ln2, "D loss at 0.5/0.5 = 2 ln 2");
  c.expect(losses::discriminator_loss(Tensor<double>({8}, 1.0 - 1e-12), Tensor<double>({8}, 1e-12)) < 1e-6,
           "D loss → 0 for d_real → 1, d_fake → 0");
  c.expect(losses::generator_adversarial_loss(half) == ln2, "L_adv(0.5) = ln 2");
  c.expect(losses::generator_adversarial_loss(Tensor<double>({8}, 1.0 - 1e-12)) < 1e-6, "L_adv → 0 as d_fake → 1");
  c.expect(losses::generator_adversarial_loss(Tensor<double>({8}, 0.3)) >
               losses::generator_adversarial_loss(Tensor<double>({8}, 0.7)),
           "L_adv(0.3) > L_adv(0.7)");
  c.expect(losses::generator_attribute_loss(perfect, y, wy) < 1e-6, "generator attribute loss ≈ 0 on agreement");
  Tensor<double> noisy({4, 2}, std::vector<double>{0.3, -1, 2, 0.1, -0.5, 4, 1, -2});
  c.expect(losses::generator_attribute_loss(noisy, y, wy) == losses::attribute_loss(noisy, y, wy),
           "generator attribute loss equals attribute_loss on the same tensors");
  const Tensor<double> z({3, 4}, 0.25);
  c.expect(losses::connection_loss(z, z) == 0.0, "L_Cn(z, z) = 0");
  c.expect(losses::connection_loss(Tensor<double>({1, 5}, 1.0), Tensor<double>({1, 5}, 0.0)) == 1.0,
           "L_Cn(1, 0) = 1");

  // Metric examples listed alongside the losses.
  nn::Rng mr(2);
  const auto feats = test::random_tensor<double>({300, 6}, mr);
  Eigen::MatrixXd f(300, 6);
  for (int i = 0; i < 300; ++i)
    for (int j = 0; j < 6; ++j) f(i, j) = feats[i * 6 + j];
  const auto d = metrics::feature_distribution(f);
  c.expect(std::abs(metrics::compute_fid(d, d)) < 1e-6, "FID(X, X) within 1e-6 of 0");
  Eigen::VectorXd v(6);
  v << 1, -2, 0.5, 0, 3, -1;
  auto shifted = d;
  shifted.mean += v;
  const double fid_shift = metrics::compute_fid(d, shifted);
  c.expect(std::abs(fid_shift - v.squaredNorm()) <= 1e-9 * v.squaredNorm(),
           "equal covariances, mean shift v → |v|² (" + fmt(fid_shift, 12) + " vs " + fmt(v.squaredNorm()) + ")");
  const auto constant = metrics::feature_distribution(Eigen::MatrixXd::Constant(10, 3, 0.7));
  const double const_cov = constant.covariance.cwiseAbs().maxCoeff();
  c.expect(const_cov < 1e-20, "constant features → zero covariance up to rounding (" + fmt(const_cov) + ")");
  c.expect((d.covariance - d.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10, "covariance symmetric to 1e-10");
  const auto x = test::random_tensor<float>({32, 32, 3}, mr), y2 = test::random_tensor<float>({32, 32, 3}, mr);
  c.expect(metrics::ssim(x, x) == 1.0, "ssim(x, x) = 1");
  c.expect(metrics::ssim(x, y2) == metrics::ssim(y2, x), "ssim(x, y) == ssim(y, x)");
  c.expect(std::isinf(metrics::psnr(x, x)), "psnr of identical images is +inf");
  c.expect(metrics::psnr(Tensor<float>({32, 32, 3}, -1.0f), Tensor<float>({32, 32, 3}, 1.0f)) == 0.0,
           "MSE = L² → 0 dB");
  const double p20 = metrics::psnr(Tensor<float>({32, 32, 3}, 0.0f), Tensor<float>({32, 32, 3}, 0.2f));
  c.expect(std::abs(p20 - 20.0) < 1e-6, "offset 0.2 → 20 dB (" + fmt(p20, 10) + "; 0.2f is not exact in binary)");
  const auto black = Tensor<float>({32, 32, 3}, -1.0f);
  c.expect(metrics::analytic_attribute_oracle(black) == std::vector<float>{0, 0, 0, 0}, "oracle(all black) = 0000");
  bool flip_ok = true;
  for (const auto& img : test::small_synthetic().images) {
    const auto o = metrics::analytic_attribute_oracle(img.pixels);
    flip_ok &= metrics::analytic_attribute_oracle(image::flip(img.pixels)) == o &&
               metrics::analytic_attribute_oracle(image::flip(img.pixels, false)) == o;
  }
  c.expect(flip_ok, "oracle invariant under both mirrors on 128 synthetic images");
  SyntheticConfig sc;
  sc.n_images = 2000;
  const auto ds = generate_synthetic_dataset(sc);
  double worst_const = 0;
  for (int a = 0; a < 4; ++a) {
    double ones = 0;
    for (const auto& img : ds.images) ones += img.attributes[a];
    worst_const = std::max(worst_const, std::abs(ones / ds.size() - 0.5));
  }
  c.expect(worst_const < 0.05, "constant-prediction accuracy within 0.05 of 50% (max deviation " + fmt(worst_const) + ")");

  const ModelState tiny = init_params(test::tiny_config(), 13);
  std::vector<int> idx(8);
  std::iota(idx.begin(), idx.end(), 0);
  const Batch b = make_batch(test::small_synthetic(), idx);
  const auto keep = metrics::edit_accuracy(tiny, metrics::oracle_predict, b.images, b.attributes, metrics::EditPlan::keep);
  const auto rec = metrics::oracle_predict(editing::reconstruct(tiny, b.images, &b.attributes));
  bool keep_ok = true;
  for (int a = 0; a < 4; ++a) {
    double hits = 0;
    for (int i = 0; i < 8; ++i) hits += rec[i * 4 + a] == b.attributes[i * 4 + a];
    keep_ok &= keep.per_attribute[a] == hits / 8;
  }
  c.expect(keep_ok, "editing to the existing value scores the plain accuracy on reconstructions");
}

// ---------------------------------------------------------------------------

void gradient_audit(Context&, Checks& c) {
  std::vector<int> idx(4);
  std::iota(idx.begin(), idx.end(), 0);
  const Batch batch = make_batch(test::small_synthetic(), idx);
  for (std::uint64_t seed : {21u, 22u}) {
    const ModelState s = init_params(test::tiny_config(), seed);
    for (Network n : kAllNetworks) {
      training::AuditOptions opt;
      opt.seed = seed;
      const auto r = training::finite_difference_audit(s, batch, n, opt);
      c.expect(r.max_relative_error < 1e-3 && r.passed(),
               std::string(network_name(n)) + " seed " + std::to_string(seed) + ": " + std::to_string(r.entries.size()) +
                   " probes, max rel " + fmt(r.max_relative_error) + ", max abs (small gradients) " +
                   fmt(r.max_absolute_error) + ", " + std::to_string(r.skipped) + " kink-crossing probes skipped");
    }
  }
}

// ---------------------------------------------------------------------------

void metric_identities(Context&, Checks& c) {
  nn::Rng rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int dim : {1, 8, 64}) {
    Eigen::MatrixXd a(500, dim), b(500, dim);
    for (int i = 0; i < 500; ++i)
      for (int j = 0; j < dim; ++j) {
        a(i, j) = g(rng);
        b(i, j) = 0.5 + 1.5 * g(rng) + 0.3 * a(i, 0);
      }
    const auto da = metrics::feature_distribution(a), db = metrics::feature_distribution(b);
    const double self = metrics::compute_fid(da, da), ab = metrics::compute_fid(da, db), ba = metrics::compute_fid(db, da);
    c.expect(std::abs(self) < 1e-6, "d=" + std::to_string(dim) + ": |FID(X, X)| = " + fmt(std::abs(self)));
    c.expect(std::abs(ab - ba) <= 1e-9 * std::max(1.0, ab),
             "d=" + std::to_string(dim) + ": FID symmetric (" + fmt(ab, 10) + " vs " + fmt(ba, 10) + ")");
  }
  std::uniform_real_distribution<double> mu(-5, 5), sd(0.05, 4);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    metrics::FeatureDistribution a, b;
    const double ma = mu(rng), mb = mu(rng), sa = sd(rng), sb = sd(rng);
    a.mean = Eigen::VectorXd::Constant(1, ma);
    b.mean = Eigen::VectorXd::Constant(1, mb);
    a.covariance = Eigen::MatrixXd::Constant(1, 1, sa * sa);
    b.covariance = Eigen::MatrixXd::Constant(1, 1, sb * sb);
    a.count = b.count = 100;
    const double want = (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb);
    worst = std::max(worst, std::abs(metrics::compute_fid(a, b) - want) / want);
  }
  c.expect(worst < 1e-4, "1-D closed form (μa−μb)² + (σa−σb)², 1000 draws: max rel err " + fmt(worst));

  bool ssim_ok = true;
  for (int t = 0; t < 20; ++t) {
    const auto x = test::random_tensor<float>({32, 32, 3}, rng);
    ssim_ok &= metrics::ssim(x, x) == 1.0;
  }
  for (const auto& img : test::small_synthetic().images) ssim_ok &= metrics::ssim(img.pixels, img.pixels) == 1.0;
  c.expect(ssim_ok, "ssim(x, x) = 1 exactly on 20 noise and 128 synthetic images");

  const Tensor<float> black({32, 32, 3}, -1.0f), white({32, 32, 3}, 1.0f), grey({32, 32, 3}, 0.0f);
  c.expect(std::isinf(metrics::psnr(grey, grey)) && metrics::psnr(grey, grey) > 0, "PSNR(x, x) = +inf");
  c.expect(metrics::psnr(black, white) == 0.0, "PSNR at MSE = L² is exactly 0 dB");
  const Tensor<float> offset({32, 32, 3}, 0.2f);
  const double mse = static_cast<double>(0.2f) * static_cast<double>(0.2f);
  const double p = metrics::psnr(grey, offset), want = 10.0 * std::log10(4.0 / mse);
  c.expect(std::abs(p - want) <= 1e-12 * want,
           "PSNR(offset 0.2f) = 10·log10(4 / 0.2f²) = " + fmt(p, 12) + " dB to 1e-12");
}

// ---------------------------------------------------------------------------
// Desk-scale end-to-end

void desk_scale(Context& ctx, Checks& c) {
  config::RunConfig cfg = config::default_run_config();
  cfg.train.output = ctx.work / "e2e";
  c.note("dataset: " + std::to_string(cfg.dataset.n_images) + " synthetic 32×32 images, 4 attributes, " +
         std::to_string(cfg.held_out) + " held out; M = " + std::to_string(cfg.train.batch_size) + ", " +
         std::to_string(cfg.train.steps) + " steps, d_z = " + std::to_string(cfg.train.network.d_z));
  const Dataset all = generate_synthetic_dataset(cfg.dataset);
  const auto [train_set, held] = split_dataset(all, cfg.held_out);

  const fs::path final_ckpt = numbered_checkpoint(cfg.train.output, cfg.train.steps);
  if (!(ctx.reuse && fs::exists(final_ckpt / "manifest.json"))) {
    fs::remove_all(cfg.train.output);
    const auto t0 = std::chrono::steady_clock::now();
    training::train(cfg.train, train_set);
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    c.expect(minutes <= 60.0, "training wall time " + fmt(minutes, 3) + " min (≤ 60)");
  } else {
    c.note("reusing " + final_ckpt.string());
  }
  ctx.e2e_run = cfg.train.output;

  const Checkpoint ck = load_checkpoint(final_ckpt);
  const auto t0 = std::chrono::steady_clock::now();
  const json r = evaluation::evaluate(ck, train_set, held, cfg.evaluate);
  std::ofstream(ctx.work / "e2e-report.json") << r.dump(2) << '\n';
  c.note("evaluation took " + fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 3) +
         " s; report in " + (ctx.work / "e2e-report.json").string());

  const auto names = r.at("attributes").get<std::vector<std::string>>();
  const auto& edit = r.at("edit_accuracy");
  for (const auto& n : names)
    c.expect(edit.at("per_attribute").at(n).get<double>() >= 0.70,
             "(a) oracle edit accuracy " + n + " = " + fmt(edit.at("per_attribute").at(n).get<double>()) + " (≥ 0.70)");
  for (const auto& n : names)
    c.expect(edit.at("preserved").at(n).get<double>() >= 0.70,
             "(b) preservation while editing " + n + " = " + fmt(edit.at("preserved").at(n).get<double>()) +
                 " (≥ 0.70)");
  const auto& ssim = r.at("reconstruction").at("ssim");
  c.expect(ssim.at("mean").get<double>() >= 0.50, "(c) reconstruction SSIM " + fmt(ssim.at("mean").get<double>()) +
                                                       " ± " + fmt(ssim.at("std").get<double>()) + " (≥ 0.50)");
  const auto& fid = r.at("fid");
  c.expect(fid.at("ratio").get<double>() < 0.2,
           "(d) FID " + fmt(fid.at("generated").at("mean").get<double>()) + " ± " +
               fmt(fid.at("generated").at("std").get<double>()) + " vs noise " +
               fmt(fid.at("noise_baseline").at("mean").get<double>()) + ": ratio " + fmt(fid.at("ratio").get<double>()) +
               " (< 0.2)");
  for (const auto& n : names) {
    const double acc = r.at("eval_classifier").at("held_out_accuracy").at(n).get<double>();
    c.expect(acc >= 0.90, "(e) eval classifier held-out accuracy " + n + " = " + fmt(acc) + " (≥ 0.90)");
  }
  const double inv = r.at("inversion").at("mean_abs_error").get<double>();
  c.expect(inv < 0.35, "(f) inversion mean |z − z̃| = " + fmt(inv) + " (< 0.35; independent uniforms 0.667)");
  const double dr = r.at("discriminator").at("held_out_real_mean").get<double>();
  const double dg = r.at("discriminator").at("generated_mean").get<double>();
  c.expect(std::abs(dr - 0.5) < 0.4, "mean D(x) on held-out images = " + fmt(dr) + " (within 0.4 of 0.5)");
  c.note("mean D(G) = " + fmt(dg));
  c.note("PSNR " + fmt(r.at("reconstruction").at("psnr").at("mean").get<double>()) + " dB");
}

// ---------------------------------------------------------------------------
// Determinism: the CLI pipeline twice

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && EGAN_HOME='" + (dir / "home").string() + "' '" + EGAN_CLI +
                          "' " + args + " >> log.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(Context& ctx, Checks& c) {
  std::array<fs::path, 2> dirs{ctx.work / "det-1", ctx.work / "det-2"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    fs::create_directories(d);
    const bool ok = run_cli(d, "make-dataset --seed 7 --n 5000 --out data") == 0 &&
                    run_cli(d, "train --data data --seed 3 --steps 50 --out run --log-every 10") == 0 &&
                    run_cli(d, "evaluate --data data --ckpt run --seed 5 --out eval") == 0;
    c.expect(ok, "pipeline in " + d.string() + " exits 0");
    if (!ok) return;
  }
  c.expect(tree_bytes(dirs[0] / "data") == tree_bytes(dirs[1] / "data"), "datasets byte-identical (5000 PNGs)");
  auto run_a = tree_bytes(dirs[0] / "home" / "runs" / "run"), run_b = tree_bytes(dirs[1] / "home" / "runs" / "run");
  // metrics.jsonl carries wall-clock time per step; compare it without that field.
  const auto strip = [](const std::string& jsonl) {
    std::istringstream in(jsonl);
    std::string line, out;
    while (std::getline(in, line)) {
      auto j = json::parse(line);
      j.erase("wall_ms");
      out += j.dump() + "\n";
    }
    return out;
  };
  const bool log_same = strip(run_a["metrics.jsonl"]) == strip(run_b["metrics.jsonl"]);
  run_a.erase("metrics.jsonl");
  run_b.erase("metrics.jsonl");
  c.expect(run_a == run_b, "checkpoints byte-identical (" + std::to_string(run_a.size()) + " files)");
  c.expect(log_same, "training logs identical apart from wall-clock time");
  c.expect(tree_bytes(dirs[0] / "eval") == tree_bytes(dirs[1] / "eval"),
           "evaluation reports and eval classifier byte-identical");
}

// ---------------------------------------------------------------------------
// Service conformance over HTTP

void service_conformance(Context& ctx, Checks& c) {
  fs::path run = ctx.e2e_run;
  if (run.empty() || !fs::exists(run)) {
    // Standalone: a short desk-scale run stands in for the full one.
    config::RunConfig cfg = config::default_run_config();
    cfg.train.steps = 300;
    cfg.train.checkpoint_every = 300;
    cfg.train.output = ctx.work / "service-run";
    if (!fs::exists(numbered_checkpoint(cfg.train.output, 300))) {
      fs::remove_all(cfg.train.output);
      training::train(cfg.train, split_dataset(generate_synthetic_dataset(cfg.dataset), cfg.held_out).first);
    }
    run = cfg.train.output;
  }
  const service::Service svc(load_checkpoint(run));
  c.note("checkpoint " + svc.checkpoint().id());
  service::Server server(svc);
  const int port = server.bind("127.0.0.1", 0);
  c.expect(port > 0, "server bound to an ephemeral port");
  if (port <= 0) return;
  std::thread t([&] { server.listen_after_bind(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(120);

  struct Reply {
    int status = 0;
    std::string content_type;
    json body;
  };
  const auto get = [&](const std::string& path) {
    Reply r;
    if (auto res = cli.Get(path)) r = {res->status, res->get_header_value("Content-Type"), json::parse(res->body)};
    return r;
  };
  const auto post = [&](const std::string& path, const json& body) {
    Reply r;
    if (auto res = cli.Post(path, body.dump(), "application/json"))
      r = {res->status, res->get_header_value("Content-Type"), json::parse(res->body)};
    return r;
  };
  const auto is_error = [](const Reply& r, int status, const std::string& code) {
    return r.status == status && r.body.size() == 2 && r.body.value("code", "") == code &&
           r.body.at("message").is_string();
  };
  const auto png64 = [](const Tensor<float>& x) {
    const auto png = image::encode_png(image::to_rgb(x));
    return service::base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  };

  const auto a1 = get("/v1/attributes"), a2 = get("/v1/attributes");
  c.expect(a1.status == 200 && a1.content_type == "application/json", "/v1/attributes: 200 with JSON content type");
  c.expect(a1.body.at("attributes").size() == 4, "/v1/attributes: 4 names for the synthetic checkpoint");
  c.expect(a1.body.at("attributes") == a2.body.at("attributes"), "/v1/attributes: stable ordering across calls");
  const auto h = get("/healthz");
  c.expect(h.status == 200 && h.body.at("checkpoint_id") == svc.checkpoint().id() &&
               h.body.at("schema_hash") == schema_hash(svc.checkpoint().schema),
           "/healthz: checkpoint id and schema hash");

  SyntheticConfig fresh;
  fresh.n_images = 4;
  fresh.seed = 99;  // a different seed, so none of these were trained on
  const Dataset held = generate_synthetic_dataset(fresh);
  const std::string img = png64(held.images[0].pixels);
  const auto inv = post("/v1/invert", {{"image", img}});
  bool z_ok = inv.status == 200 && static_cast<int>(inv.body.at("z").size()) == svc.checkpoint().state.config.d_z;
  if (z_ok)
    for (const auto& v : inv.body.at("z")) z_ok &= v.get<double>() > -1.0 && v.get<double>() < 1.0;
  c.expect(z_ok, "/v1/invert: z has d_z entries in (−1, 1)");
  c.expect(is_error(post("/v1/invert", {{"image", "@@not-base64@@"}}), 400, "bad_image"),
           "/v1/invert: malformed base64 → 400 bad_image");
  c.expect(is_error(post("/v1/invert", {{"image", png64(Tensor<float>({64, 64, 3}))}}), 422, "resolution_mismatch"),
           "/v1/invert: 64×64 image → 422 resolution_mismatch");

  const auto identity = post("/v1/edit", {{"image", img}, {"attributes", inv.body.at("predicted_attributes")}});
  const auto rec = post("/v1/reconstruct", {{"image", img}});
  c.expect(identity.status == 200 && identity.body.at("image") == rec.body.at("image"),
           "/v1/edit: identity attribute map byte-identical to /v1/reconstruct");
  const auto x = held.images[0].pixels;
  c.expect(rec.body.at("image") == png64(editing::reconstruct(svc.checkpoint().state, x).row(0)),
           "/v1/reconstruct: byte-identical to the library reconstruction");
  c.expect(is_error(post("/v1/edit", {{"image", img}, {"attributes", {{"red_tint", 1.5}}}}), 422, "attribute_range"),
           "/v1/edit: value 1.5 → 422 attribute_range");
  const json edit = {{"image", img}, {"attributes", {{"red_tint", -0.5}, {"border", 1}}}};
  const auto e1 = post("/v1/edit", edit), e2 = post("/v1/edit", edit);
  c.expect(e1.status == 200 && e1.body == e2.body, "/v1/edit: repeated request gives identical bytes");

  const json attrs = {{"red_tint", 1}, {"large_shape", 0}, {"border", 1}, {"bright_background", 0}};
  const auto g1 = post("/v1/generate", {{"attributes", attrs}, {"seed", 42}});
  const auto g2 = post("/v1/generate", {{"attributes", attrs}, {"seed", 42}});
  c.expect(g1.status == 200 && g1.body.at("image") == g2.body.at("image"), "/v1/generate: same seed → same bytes");
  const auto drawn = post("/v1/generate", {{"attributes", attrs}});
  const auto replay = post("/v1/generate", {{"attributes", attrs}, {"seed", drawn.body.at("seed")}});
  c.expect(drawn.status == 200 && drawn.body.contains("seed") && replay.body.at("image") == drawn.body.at("image"),
           "/v1/generate: omitted seed is drawn, returned and replayable");
  c.expect(is_error(post("/v1/generate", {{"attributes", {{"smiling", 1}}}}), 422, "unknown_attribute"),
           "/v1/generate: unknown attribute → 422 unknown_attribute");

  const auto g3 = post("/v1/generate", {{"attributes", {{"bright_background", 1}}}, {"seed", 7}});
  const json ea = {{"z", g1.body.at("z")}, {"attributes", attrs}};
  const json eb = {{"z", g3.body.at("z")}, {"attributes", {{"bright_background", 1}}}};
  const auto two = post("/v1/interpolate", {{"a", ea}, {"b", eb}, {"steps", 2}});
  c.expect(two.status == 200 && two.body.at("frames").size() == 2 && two.body.at("frames")[0] == g1.body.at("image") &&
               two.body.at("frames")[1] == g3.body.at("image"),
           "/v1/interpolate: steps=2 → exactly the endpoint frames");
  c.expect(is_error(post("/v1/interpolate", {{"a", ea}, {"b", eb}, {"steps", 65}}), 422, "too_many_frames"),
           "/v1/interpolate: steps=65 → 422 too_many_frames");
  const auto pose = post("/v1/interpolate", {{"a", {{"image", img}}}, {"steps", 6}, {"mode", "pose"}});
  const auto pred = editing::predict_attributes(svc.checkpoint().state, x);
  const std::string flip_rec = png64(editing::reconstruct(svc.checkpoint().state, image::flip(x), &pred).row(0));
  c.expect(pose.status == 200 && pose.body.at("frames").size() == 6 &&
               pose.body.at("frames")[0] == rec.body.at("image") && pose.body.at("frames")[5] == flip_rec,
           "/v1/interpolate pose mode: frames run from reconstruct(x) to reconstruct(flip(x))");

  server.stop();
  t.join();
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "egan-acceptance";
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) ctx.work = argv[++i];
    else if (a == "--reuse") ctx.reuse = true;
    else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(item);
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--only name,...] [--reuse]\n";
      return 2;
    }
  }
  fs::create_directories(ctx.work);
  ctx.work = fs::absolute(ctx.work);  // the CLI runs are started from inside it

  struct Criterion {
    std::string name;
    std::function<void(Context&, Checks&)> run;
    double limit_s = 0;  // 0: no runtime bound
  };
  const std::vector<Criterion> criteria = {
      {"loss-suite", loss_suite, 60},
      {"gradient-audit", gradient_audit, 300},
      {"metric-identities", metric_identities, 60},
      {"desk-scale-e2e", desk_scale},
      {"determinism", determinism},
      {"service-conformance", service_conformance},
  };
  int failed = 0;
  for (const auto& [name, fn, limit_s] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Checks c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(ctx, c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0) c.expect(secs < limit_s, "runtime " + fmt(secs, 3) + " s (< " + fmt(limit_s) + " s)");
    std::cout << (c.passed() ? "PASS " : "FAIL ") << name << " (" << fmt(secs, 3) << " s)\n";
    for (const auto& l : c.lines()) std::cout << "    " << l << "\n";
    std::cout.flush();
    failed += !c.passed();
  }
  return failed == 0 ? 0 : 1;
}
