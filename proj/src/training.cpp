#include "egan/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "egan/checkpoint.hpp"

namespace egan::training {
namespace fs = std::filesystem;
using losses::LossReport;

const nn::AdamConfig& Hyper::adam(Network n) const {
  switch (n) {
    case Network::generator: return adam_g;
    case Network::discriminator: return adam_d;
    case Network::classifier: return adam_c;
    case Network::connection: return adam_cn;
  }
  throw std::logic_error("unknown network");
}

nlohmann::json StepMetrics::to_json(bool with_wall_clock) const {
  nlohmann::json j = {{"step", step},
                      {"L_D", losses.discriminator},
                      {"L_C", losses.classifier},
                      {"L_adv", losses.adversarial},
                      {"L_Gce_a", losses.gen_attr_real},
                      {"L_Gce_at", losses.gen_attr_random},
                      {"L_G", losses.generator_total},
                      {"L_Cn", losses.connection},
                      {"D_real", d_real},
                      {"D_fake", d_fake},
                      {"C_accuracy", classifier_accuracy}};
  if (with_wall_clock) j["wall_ms"] = wall_ms;
  return j;
}

namespace {

template <typename T>
double mean_of(const Tensor<T>& t) {
  double s = 0;
  for (T v : t.values()) s += v;
  return t.empty() ? 0.0 : s / static_cast<double>(t.size());
}

template <typename T>
bool grads_finite(const std::vector<Tensor<T>>& grads) {
  for (const auto& g : grads)
    if (!g.all_finite()) return false;
  return true;
}

template <typename T>
Tensor<T> scaled(Tensor<T> t, double s) {
  for (auto& v : t.values()) v = static_cast<T>(v * s);
  return t;
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

}  // namespace

template <typename T>
PhaseResult<T> discriminator_phase(const ModelStateT<T>& s, const Tensor<T>& real, const Tensor<T>& fake,
                                   PhaseOptions opt) {
  const int m = real.dim(0);
  typename FeatureNetT<T>::Trace trace;
  const auto out = s.discriminator.forward(concat_rows(real, fake), opt.grads || opt.kinks ? &trace : nullptr);
  const Tensor<T> d_real = out.out.rows(0, m), d_fake = out.out.rows(m, out.out.dim(0));
  const auto loss = losses::discriminator_loss_grad(d_real, d_fake);
  PhaseResult<T> r;
  r.loss = loss.value;
  r.d_real = mean_of(d_real);
  r.d_fake = mean_of(d_fake);
  if (opt.grads) {
    r.grads = s.discriminator.zero_grads();
    s.discriminator.backward(concat_rows(loss.grad_real, loss.grad_fake), nullptr, trace, &r.grads, false);
  }
  if (opt.kinks) s.discriminator.kink_pattern(trace, r.kinks);
  return r;
}

template <typename T>
PhaseResult<T> classifier_phase(const ModelStateT<T>& s, const Tensor<T>& real, const Tensor<T>& labels,
                                PhaseOptions opt) {
  typename FeatureNetT<T>::Trace trace;
  const auto out = s.classifier.forward(real, opt.grads || opt.kinks ? &trace : nullptr);
  const auto loss = losses::attribute_loss_grad(out.out, labels, losses::selective_weights(labels));
  PhaseResult<T> r;
  r.loss = loss.value;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += (out.out[i] > T(0)) == (labels[i] > T(0.5));
  r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  if (opt.grads) {
    r.grads = s.classifier.zero_grads();
    s.classifier.backward(loss.grad, nullptr, trace, &r.grads, false);
  }
  if (opt.kinks) s.classifier.kink_pattern(trace, r.kinks);
  return r;
}

template <typename T>
PhaseResult<T> generator_phase(const ModelStateT<T>& s, const Tensor<T>& z, const Tensor<T>& y_a,
                               const Tensor<T>& y_at, const Tensor<T>* z_tilde, double lambda_a, double lambda_at,
                               PhaseOptions opt) {
  const bool traced = opt.grads || opt.kinks;
  nn::Trace<T> tg1, tg2;
  typename FeatureNetT<T>::Trace td, tc1, tc2;
  const Tensor<T> fake_a = s.generator.forward(z, y_a, traced ? &tg1 : nullptr);
  const auto d_out = s.discriminator.forward(fake_a, traced ? &td : nullptr);
  const auto c_out = s.classifier.forward(fake_a, traced ? &tc1 : nullptr);

  PhaseResult<T> r;
  r.f_d = d_out.features;
  r.f_c = c_out.features;
  r.z_tilde = z_tilde ? *z_tilde : s.connection.forward(r.f_d, r.f_c, y_a, nullptr);

  const Tensor<T> fake_at = s.generator.forward(r.z_tilde, y_at, traced ? &tg2 : nullptr);
  const auto c_out_at = s.classifier.forward(fake_at, traced ? &tc2 : nullptr);

  const auto adv = losses::generator_adversarial_loss_grad(d_out.out);
  const auto la = losses::attribute_loss_grad(c_out.out, y_a, losses::selective_weights(y_a));
  const auto lat = losses::attribute_loss_grad(c_out_at.out, y_at, losses::selective_weights(y_at));
  r.adversarial = adv.value;
  r.attr_real = la.value;
  r.attr_random = lat.value;
  r.loss = losses::combine_generator_loss(adv.value, la.value, lat.value, lambda_a, lambda_at);

  if (opt.grads) {
    Tensor<T> g_fake_a = s.discriminator.backward(adv.grad, nullptr, td, nullptr, true);
    add_into(g_fake_a, s.classifier.backward(scaled(la.grad, lambda_a), nullptr, tc1, nullptr, true));
    const Tensor<T> g_fake_at = s.classifier.backward(scaled(lat.grad, lambda_at), nullptr, tc2, nullptr, true);
    r.grads = s.generator.net().zero_grads();
    s.generator.backward(g_fake_a, tg1, &r.grads);
    s.generator.backward(g_fake_at, tg2, &r.grads);
  }
  if (opt.kinks) {
    s.generator.net().kink_pattern(tg1, r.kinks);
    s.discriminator.kink_pattern(td, r.kinks);
    s.classifier.kink_pattern(tc1, r.kinks);
    s.generator.net().kink_pattern(tg2, r.kinks);
    s.classifier.kink_pattern(tc2, r.kinks);
  }
  return r;
}

template <typename T>
PhaseResult<T> connection_phase(const ModelStateT<T>& s, const Tensor<T>& f_d, const Tensor<T>& f_c,
                                const Tensor<T>& y_a, const Tensor<T>& z, PhaseOptions opt) {
  nn::Trace<T> trace;
  const Tensor<T> z_hat = s.connection.forward(f_d, f_c, y_a, opt.grads || opt.kinks ? &trace : nullptr);
  const auto loss = losses::connection_loss_grad(z, z_hat);
  PhaseResult<T> r;
  r.loss = loss.value;
  if (opt.grads) {
    r.grads = s.connection.net().zero_grads();
    s.connection.backward(loss.grad, trace, &r.grads);
  }
  if (opt.kinks) {
    s.connection.net().kink_pattern(trace, r.kinks);
    for (std::size_t i = 0; i < z.size(); ++i) r.kinks.push_back(z[i] > z_hat[i]);
  }
  return r;
}

namespace {

nlohmann::json abort_snapshot(const ModelState& s, const Batch& batch, const char* phase, const LossReport& l) {
  nlohmann::json j;
  j["step"] = s.step + 1;
  j["phase"] = phase;
  j["losses"] = {{"L_D", l.discriminator}, {"L_C", l.classifier}, {"L_adv", l.adversarial},
                 {"L_Gce_a", l.gen_attr_real}, {"L_Gce_at", l.gen_attr_random}, {"L_Cn", l.connection}};
  for (auto& [k, v] : j["losses"].items())
    if (!std::isfinite(v.get<double>())) v = std::to_string(v.get<double>());
  j["batch_ids"] = batch.ids;
  j["parameters_finite"] = s.all_finite();
  return j;
}

void apply(ModelState& s, Network n, const PhaseResult<float>& r, const Hyper& hyper, const Batch& batch,
           const char* phase, const LossReport& report) {
  if (!std::isfinite(r.loss) || !grads_finite(r.grads))
    throw NumericAbort(std::string("non-finite ") + (std::isfinite(r.loss) ? "gradient" : "loss") + " in " +
                           phase + " phase at step " + std::to_string(s.step + 1),
                       abort_snapshot(s, batch, phase, report));
  const auto params = s.params(n);
  nn::adam_update<float>(params, r.grads, s.adam(n), hyper.adam(n));
}

}  // namespace

StepMetrics train_step(ModelState& s, const Batch& batch, nn::Rng& rng, const Hyper& hyper) {
  const auto t0 = std::chrono::steady_clock::now();
  const NetworkConfig& cfg = s.config;
  const int m = batch.size();
  if (batch.images.rank() != 4 || batch.images.dim(1) != cfg.resolution || batch.images.dim(2) != cfg.resolution ||
      batch.images.dim(3) != 3)
    throw DimensionError("train_step: batch images " + shape_string(batch.images.shape()) + " do not match resolution " +
                         std::to_string(cfg.resolution));
  if (batch.attributes.shape() != Shape{m, cfg.n_a})
    throw DimensionError("train_step: batch attributes " + shape_string(batch.attributes.shape()) + ", expected " +
                         shape_string({m, cfg.n_a}));

  const Tensor<float>& x = batch.images;
  const Tensor<float>& y_a = batch.attributes;
  const Tensor<float> z = sample_latent<float>(m, cfg.d_z, rng);
  const Tensor<float> y_at = [&] {
    Tensor<float> y({m, cfg.n_a});
    std::bernoulli_distribution coin(0.5);
    for (auto& v : y.values()) v = coin(rng) ? 1.0f : 0.0f;
    return y;
  }();

  StepMetrics out;
  LossReport& l = out.losses;

  const Tensor<float> fake = s.generator.forward(z, y_a, nullptr);
  const auto rd = discriminator_phase(s, x, fake);
  l.discriminator = rd.loss;
  out.d_real = rd.d_real;
  out.d_fake = rd.d_fake;
  apply(s, Network::discriminator, rd, hyper, batch, "D", l);

  const auto rc = classifier_phase(s, x, y_a);
  l.classifier = rc.loss;
  out.classifier_accuracy = rc.accuracy;
  apply(s, Network::classifier, rc, hyper, batch, "C", l);

  const auto rg = generator_phase<float>(s, z, y_a, y_at, nullptr, hyper.lambda_a, hyper.lambda_at);
  l.adversarial = rg.adversarial;
  l.gen_attr_real = rg.attr_real;
  l.gen_attr_random = rg.attr_random;
  l.generator_total = rg.loss;
  apply(s, Network::generator, rg, hyper, batch, "G", l);

  const auto rn = connection_phase(s, rg.f_d, rg.f_c, y_a, z);
  l.connection = rn.loss;
  apply(s, Network::connection, rn, hyper, batch, "Cn", l);

  ++s.step;
  out.step = s.step;
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

bool AuditReport::passed(double relative_tolerance, double absolute_tolerance) const {
  return !entries.empty() && max_relative_error < relative_tolerance && max_absolute_error < absolute_tolerance;
}

AuditReport finite_difference_audit(const ModelState& state, const Batch& batch, Network component,
                                    const AuditOptions& opt) {
  using D = double;
  ModelStateT<D> s = state.cast<D>();
  const NetworkConfig& cfg = s.config;
  const int m = batch.size();
  nn::Rng rng(opt.seed);
  const Tensor<D> x = batch.images.cast<D>();
  const Tensor<D> y_a = batch.attributes.cast<D>();
  const Tensor<D> z = sample_latent<D>(m, cfg.d_z, rng);
  const Tensor<D> y_at = sample_random_attributes(m, AttributeSchema{std::vector<std::string>(cfg.n_a, "")}, rng)
                             .cast<D>();
  // Inputs produced by other networks are frozen at the base parameters.
  const Tensor<D> fake = s.generator.forward(z, y_a, nullptr);
  const auto base_g = generator_phase<D>(s, z, y_a, y_at, nullptr, opt.lambda_a, opt.lambda_at, {false, false});
  const Tensor<D> z_tilde = base_g.z_tilde;

  auto evaluate = [&](PhaseOptions po) -> PhaseResult<D> {
    switch (component) {
      case Network::discriminator: return discriminator_phase<D>(s, x, fake, po);
      case Network::classifier: return classifier_phase<D>(s, x, y_a, po);
      case Network::generator:
        return generator_phase<D>(s, z, y_a, y_at, &z_tilde, opt.lambda_a, opt.lambda_at, po);
      case Network::connection: return connection_phase<D>(s, base_g.f_d, base_g.f_c, y_a, z, po);
    }
    throw std::logic_error("unknown network");
  };

  const PhaseResult<D> base = evaluate({true, true});
  AuditReport report;
  report.component = component;
  auto params = s.params(component);
  const auto names = s.param_names(component);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<D>& p = *params[t];
    std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
    int accepted = 0;
    for (int attempt = 0; attempt < 8 * opt.samples_per_tensor && accepted < opt.samples_per_tensor; ++attempt) {
      const std::size_t i = pick(rng);
      const D original = p[i];
      p[i] = original + opt.step;
      const auto plus = evaluate({false, true});
      p[i] = original - opt.step;
      const auto minus = evaluate({false, true});
      p[i] = original;
      if (plus.kinks != base.kinks || minus.kinks != base.kinks) {
        ++report.skipped;
        continue;
      }
      AuditEntry e;
      e.parameter = names[t];
      e.index = i;
      e.analytic = base.grads[t][i];
      e.numeric = (plus.loss - minus.loss) / (2 * opt.step);
      const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
      e.absolute = scale < opt.small_gradient;
      e.error = e.absolute ? std::abs(e.analytic - e.numeric) : std::abs(e.analytic - e.numeric) / scale;
      if (e.absolute)
        report.max_absolute_error = std::max(report.max_absolute_error, e.error);
      else
        report.max_relative_error = std::max(report.max_relative_error, e.error);
      report.entries.push_back(e);
      ++accepted;
    }
  }
  return report;
}

void TrainConfig::validate() const {
  network.validate();
  if (batch_size < 2) throw std::invalid_argument("train: batch size must be at least 2");
  if (steps < 0) throw std::invalid_argument("train: steps must be non-negative");
  if (checkpoint_every < 1) throw std::invalid_argument("train: checkpoint interval must be positive");
  if (hyper.lambda_a < 0 || hyper.lambda_at < 0) throw std::invalid_argument("train: loss weights must be >= 0");
  for (Network n : kAllNetworks)
    if (!(hyper.adam(n).lr > 0)) throw std::invalid_argument("train: learning rates must be positive");
  if (output.empty()) throw std::invalid_argument("train: output directory not set");
}

nlohmann::json to_json(const TrainConfig& c) {
  auto adam = [](const nn::AdamConfig& a) {
    return nlohmann::json{{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
  };
  return {{"network", egan::to_json(c.network)},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"checkpoint_every", c.checkpoint_every},
          {"seed", c.seed},
          {"lambda_a", c.hyper.lambda_a},
          {"lambda_at", c.hyper.lambda_at},
          {"adam", {{"G", adam(c.hyper.adam_g)}, {"D", adam(c.hyper.adam_d)}, {"C", adam(c.hyper.adam_c)},
                    {"Cn", adam(c.hyper.adam_cn)}}}};
}

namespace {

// Drops records past `step` so a resumed run does not duplicate lines.
void truncate_metrics_log(const fs::path& path, std::int64_t step) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::ostringstream kept;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      if (nlohmann::json::parse(line).at("step").get<std::int64_t>() <= step) kept << line << '\n';
    } catch (const nlohmann::json::exception&) {
      break;  // torn final line
    }
  }
  in.close();
  std::ofstream(path, std::ios::trunc) << kept.str();
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const std::optional<fs::path>& resume,
                  const StepCallback& on_step) {
  TrainConfig cfg = config;
  ModelState state;
  if (resume) {
    Checkpoint ck = load_checkpoint(*resume);
    if (!(ck.schema == data.schema))
      throw std::invalid_argument("train: dataset attributes do not match the checkpoint being resumed");
    state = std::move(ck.state);
    cfg.network = state.config;
  } else {
    cfg.network.n_a = data.schema.count();
    cfg.network.resolution = data.resolution();
    cfg.validate();
    state = init_params<float>(cfg.network, cfg.seed);
  }
  cfg.validate();
  if (data.resolution() != cfg.network.resolution)
    throw std::invalid_argument("train: dataset resolution " + std::to_string(data.resolution()) +
                                " does not match network resolution " + std::to_string(cfg.network.resolution));
  if (data.size() < cfg.batch_size)
    throw std::invalid_argument("train: dataset has " + std::to_string(data.size()) + " images, fewer than batch size " +
                                std::to_string(cfg.batch_size));
  if (state.step > cfg.steps)
    throw std::invalid_argument("train: checkpoint is already at step " + std::to_string(state.step) +
                                ", beyond the requested " + std::to_string(cfg.steps));

  fs::create_directories(cfg.output);
  const fs::path log_path = cfg.output / "metrics.jsonl";
  truncate_metrics_log(log_path, state.step);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw std::runtime_error("cannot open " + log_path.string());

  const nlohmann::json extra = {{"train", to_json(cfg)}};
  TrainResult result;
  auto save = [&](const std::optional<StepMetrics>& last) {
    const fs::path dir = numbered_checkpoint(cfg.output, state.step);
    // Without wall-clock time the manifest, and so the checkpoint id, is reproducible.
    save_checkpoint(state, data.schema, dir, last ? last->to_json(false) : nlohmann::json::object(), extra);
    write_latest_pointer(cfg.output, dir);
    result.checkpoint = dir;
  };

  if (!resume) save(std::nullopt);
  while (state.step < cfg.steps) {
    const Batch batch = sample_batch(data, cfg.batch_size, state.rng);
    try {
      result.last = train_step(state, batch, state.rng, cfg.hyper);
    } catch (NumericAbort& e) {
      const fs::path dump = cfg.output / ("abort-" + std::to_string(state.step + 1));
      save_checkpoint(state, data.schema, dump, e.snapshot(), extra);
      std::ofstream(dump / "diagnostic.json") << e.snapshot().dump(2) << '\n';
      e.set_dump_path(dump);
      throw;
    }
    log << result.last->to_json().dump() << '\n';
    if (on_step) on_step(*result.last);
    if (state.step % cfg.checkpoint_every == 0 || state.step == cfg.steps) {
      log.flush();
      save(result.last);
    }
  }
  if (result.checkpoint.empty()) result.checkpoint = resolve_checkpoint(*resume);
  result.final_step = state.step;
  return result;
}

#define EGAN_INSTANTIATE_PHASES(T)                                                                               \
  template PhaseResult<T> discriminator_phase<T>(const ModelStateT<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                                 PhaseOptions);                                                \
  template PhaseResult<T> classifier_phase<T>(const ModelStateT<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                              PhaseOptions);                                                   \
  template PhaseResult<T> generator_phase<T>(const ModelStateT<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                             const Tensor<T>&, const Tensor<T>*, double, double, PhaseOptions); \
  template PhaseResult<T> connection_phase<T>(const ModelStateT<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                              const Tensor<T>&, const Tensor<T>&, PhaseOptions);

EGAN_INSTANTIATE_PHASES(float)
EGAN_INSTANTIATE_PHASES(double)

}  // namespace egan::training
