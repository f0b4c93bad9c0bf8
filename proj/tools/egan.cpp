// Command-line front end: dataset generation, training, editing, evaluation
// and the HTTP service.

#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "egan/checkpoint.hpp"
#include "egan/config.hpp"
#include "egan/editing.hpp"
#include "egan/evaluation.hpp"
#include "egan/image_io.hpp"
#include "egan/service.hpp"
#include "egan/training.hpp"

namespace fs = std::filesystem;
using namespace egan;

namespace {

constexpr int kExitOk = 0, kExitOther = 1, kExitUsage = 2, kExitNumeric = 3;

/// Bad arguments discovered after parsing: exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path egan_home() {
  if (const char* h = std::getenv("EGAN_HOME"); h && *h) return h;
  if (const char* h = std::getenv("HOME"); h && *h) return fs::path(h) / ".egan";
  return ".egan";
}

/// A path that exists is used as is; anything else names a run under $EGAN_HOME/runs.
fs::path resolve_run(const std::string& value) {
  if (value.empty()) return egan_home() / "runs" / "default";
  if (fs::exists(value)) return value;
  return egan_home() / "runs" / value;
}

/// Shared --config / --set handling.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;

  void add(CLI::App* app) {
    app->add_option("--config", file, "INI file; see `egan config` for every key")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override one key, e.g. --set train.steps=100 (repeatable)");
  }

  config::RunConfig load() const {
    config::RunConfig c = file.empty() ? config::default_run_config() : config::load_config(file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      try {
        config::set_value(c, s.substr(0, eq), s.substr(eq + 1));
      } catch (const ParseError& e) {
        throw UsageError(e.what());
      }
    }
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

/// The dataset named by --data, or the synthetic one described by the config.
Dataset load_or_generate(const std::string& data, const config::RunConfig& c) {
  if (!data.empty()) return load_dataset(data);
  return generate_synthetic_dataset(c.dataset);
}

std::pair<Dataset, Dataset> split(const Dataset& d, int held_out) {
  if (held_out < 1 || held_out >= d.size())
    throw UsageError("dataset.held_out must lie in [1, " + std::to_string(d.size() - 1) + "]");
  return split_dataset(d, held_out);
}

Tensor<float> read_image(const fs::path& path, const ModelState& s) {
  const auto rgb = image::read_png(path);
  const int r = s.config.resolution;
  if (rgb.width != r || rgb.height != r)
    throw UsageError(path.string() + " is " + std::to_string(rgb.width) + "×" + std::to_string(rgb.height) +
                     "; the checkpoint edits " + std::to_string(r) + "×" + std::to_string(r) + " images");
  return image::from_rgb(rgb);
}

void write_image(const fs::path& path, const Tensor<float>& x) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  image::write_png(path, image::to_rgb(x.rank() == 4 ? x.row(0) : x));
}

void write_grid(const fs::path& path, const Tensor<float>& frames, int columns) {
  std::vector<image::RgbImage> cells;
  for (int i = 0; i < frames.dim(0); ++i) cells.push_back(image::to_rgb(frames.row(i)));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  image::write_png(path, image::make_grid(cells, columns));
}

float parse_value(const std::string& name, const std::string& text) {
  float v;
  std::istringstream in(text);
  if (!(in >> v) || !in.eof()) throw UsageError("attribute " + name + ": '" + text + "' is not a number");
  if (!(v >= -1.0f && v <= 1.0f)) throw UsageError("attribute " + name + " = " + text + " lies outside [-1, 1]");
  return v;
}

/// "name=value" assignments applied over `base`.
std::vector<float> apply_assignments(const AttributeSchema& schema, const std::vector<std::string>& sets,
                                     std::vector<float> base) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("expected name=value, got '" + s + "'");
    const std::string name = s.substr(0, eq);
    const auto idx = schema.index_of(name);
    if (!idx) throw UsageError("unknown attribute '" + name + "'");
    base[*idx] = parse_value(name, s.substr(eq + 1));
  }
  return base;
}

/// Comma-separated vector with one entry per attribute.
std::vector<float> parse_attribute_list(const AttributeSchema& schema, const std::string& text) {
  std::vector<float> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string name = out.size() < schema.names.size() ? schema.names[out.size()] : "#" + std::to_string(out.size());
    out.push_back(parse_value(name, item));
  }
  if (static_cast<int>(out.size()) != schema.count())
    throw UsageError("expected " + std::to_string(schema.count()) + " comma-separated attribute values");
  return out;
}

Tensor<float> row(const std::vector<float>& v) { return Tensor<float>({1, static_cast<int>(v.size())}, v); }

Checkpoint open_checkpoint(const std::string& value) { return load_checkpoint(resolve_run(value)); }

// ---------------------------------------------------------------------------

int cmd_make_dataset(const std::string& out, const config::RunConfig& c) {
  c.dataset.validate();
  const Dataset d = generate_synthetic_dataset(c.dataset);
  save_dataset(d, out);
  write_text(fs::path(out) / "egan.cfg", config::to_ini(c));
  std::cout << "wrote " << d.size() << " images to " << out << "\n";
  return kExitOk;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& resume, int log_every,
              config::RunConfig c) {
  const Dataset all = load_or_generate(data, c);
  const auto [train_set, held] = split(all, c.held_out);
  c.train.network.resolution = all.resolution();
  c.train.network.n_a = all.schema.count();
  c.train.output = resolve_run(out);
  c.train.validate();
  fs::create_directories(c.train.output);
  write_text(c.train.output / "egan.cfg", config::to_ini(c));
  std::optional<fs::path> from;
  if (!resume.empty()) from = resolve_checkpoint(resolve_run(resume));
  std::cout << "training on " << train_set.size() << " images (" << held.size() << " held out) into "
            << c.train.output.string() << "\n";
  try {
    const auto result = training::train(c.train, train_set, from, [&](const training::StepMetrics& m) {
      if (log_every > 0 && (m.step % log_every == 0 || m.step == c.train.steps))
        std::cout << m.to_json().dump() << std::endl;
    });
    std::cout << "checkpoint " << result.checkpoint.string() << " (step " << result.final_step << ")\n";
  } catch (const training::NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\ndump: " << e.dump_path().string() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_edit(const std::string& ckpt, const std::string& in, const std::vector<std::string>& sets,
             const std::vector<std::string>& source_sets, const std::string& manifest, const std::string& out) {
  const Checkpoint ck = open_checkpoint(ckpt);
  const ModelState& s = ck.state;
  const auto edit_one = [&](const fs::path& src, const std::vector<std::string>& assignments, const fs::path& dst) {
    const auto x = read_image(src, s);
    const auto source = row(apply_assignments(ck.schema, source_sets, editing::predict_attributes(s, x).storage()));
    const auto target = row(apply_assignments(ck.schema, assignments, source.storage()));
    write_image(dst, editing::edit_attributes(s, x, target, &source));
    std::cout << dst.string() << "\n";
  };
  if (!manifest.empty()) {
    // One edit per line: <image path> name=value ...; '#' starts a comment.
    std::ifstream f(manifest);
    if (!f) throw std::runtime_error("cannot read manifest " + manifest);
    std::vector<std::pair<fs::path, std::vector<std::string>>> jobs;
    std::string line;
    int n = 0;
    while (std::getline(f, line)) {
      ++n;
      if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
      std::istringstream ls(line);
      std::string path, a;
      if (!(ls >> path)) continue;
      std::vector<std::string> assignments;
      while (ls >> a) assignments.push_back(a);
      if (assignments.empty()) throw UsageError(manifest + ":" + std::to_string(n) + ": no attribute assignments");
      fs::path p(path);
      if (p.is_relative()) p = fs::path(manifest).parent_path() / p;
      jobs.emplace_back(p, assignments);
    }
    // Validate everything before writing anything.
    for (const auto& [p, a] : jobs) apply_assignments(ck.schema, a, std::vector<float>(ck.schema.count(), 0.0f));
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& [p, a] = jobs[i];
      std::ostringstream name;
      name << std::setw(4) << std::setfill('0') << i << "_" << p.stem().string() << ".png";
      edit_one(p, a, fs::path(out) / name.str());
    }
    return kExitOk;
  }
  if (in.empty()) throw UsageError("edit needs --in or --manifest");
  if (sets.empty()) throw UsageError("edit needs at least one --set name=value");
  apply_assignments(ck.schema, sets, std::vector<float>(ck.schema.count(), 0.0f));
  edit_one(in, sets, out);
  return kExitOk;
}

int cmd_generate(const std::string& ckpt, const std::string& attrs, int n, std::uint64_t seed, const std::string& out) {
  const Checkpoint ck = open_checkpoint(ckpt);
  if (n < 1) throw UsageError("--n must be positive");
  const auto y = parse_attribute_list(ck.schema, attrs);
  Tensor<float> ys({n, ck.schema.count()});
  for (int i = 0; i < n; ++i) std::copy(y.begin(), y.end(), ys.data() + static_cast<std::size_t>(i) * y.size());
  nn::Rng rng(seed);
  const auto images = editing::generate_novel(ck.state, rng, ys);
  const int columns = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  write_grid(out, images, columns);
  std::cout << out << " (" << n << " images, " << columns << " columns)\n";
  return kExitOk;
}

int cmd_interpolate(const std::string& ckpt, const std::string& attrs_a, const std::string& attrs_b,
                    std::uint64_t seed, const std::string& in_a, const std::string& in_b, int steps,
                    const std::string& out) {
  const Checkpoint ck = open_checkpoint(ckpt);
  const ModelState& s = ck.state;
  nn::Rng rng(seed);
  const auto end = [&](const std::string& in, const std::string& attrs) -> std::pair<std::vector<float>, std::vector<float>> {
    if (!in.empty()) {
      const auto x = read_image(in, s);
      const auto pred = editing::predict_attributes(s, x);
      const auto y = attrs.empty() ? pred.storage() : parse_attribute_list(ck.schema, attrs);
      return {editing::invert_image(s, x, &pred).storage(), y};
    }
    if (attrs.empty()) throw UsageError("each endpoint needs --in-a/--in-b or --attrs-a/--attrs-b");
    return {sample_latent(1, s.config.d_z, rng).storage(), parse_attribute_list(ck.schema, attrs)};
  };
  const auto [za, ya] = end(in_a, attrs_a);
  const auto [zb, yb] = end(in_b, attrs_b);
  if (steps < 2) throw UsageError("--steps must be at least 2");
  write_grid(out, editing::interpolate(s, za, ya, zb, yb, steps), steps);
  std::cout << out << "\n";
  return kExitOk;
}

int cmd_pose(const std::string& ckpt, const std::string& in, int steps, const std::string& axis,
             const std::string& out) {
  const Checkpoint ck = open_checkpoint(ckpt);
  const auto x = read_image(in, ck.state);
  if (steps < 2) throw UsageError("--steps must be at least 2");
  const auto frames = editing::pose_walk(ck.state, x, steps, nullptr,
                                         axis == "vertical" ? editing::FlipAxis::vertical : editing::FlipAxis::horizontal);
  write_grid(out, frames, steps);
  std::cout << out << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data, const std::string& classifier_dir,
                 const std::string& out, const config::RunConfig& c) {
  const Checkpoint ck = open_checkpoint(ckpt);
  const Dataset all = load_or_generate(data, c);
  const auto [train_set, held] = split(all, c.held_out);
  const fs::path dir(out);
  fs::create_directories(dir);
  const metrics::EvalClassifier cls = classifier_dir.empty()
                                          ? metrics::train_eval_classifier(train_set, c.evaluate.classifier, &held)
                                          : metrics::EvalClassifier::load(classifier_dir);
  if (classifier_dir.empty()) cls.save(dir / "eval_classifier");
  const auto report = evaluation::evaluate(ck, train_set, held, c.evaluate, &cls);
  write_text(dir / "report.json", report.dump(2) + "\n");
  const std::string text = evaluation::format_report(report);
  write_text(dir / "report.txt", text);
  write_text(dir / "egan.cfg", config::to_ini(c));
  std::cout << text;
  return kExitOk;
}

std::atomic<service::Server*> g_server{nullptr};

int cmd_serve(const std::string& ckpt, const std::string& host, int port, const service::ServiceOptions& opt) {
  const service::Service svc(open_checkpoint(ckpt), opt);
  service::Server server(svc);
  const int bound = server.bind(host, port);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "serving " << svc.checkpoint().id() << " on http://" << host << ":" << bound << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  server.listen_after_bind();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-editable GAN: train, edit, evaluate and serve.\n"
               "Checkpoints default to $EGAN_HOME/runs (EGAN_HOME defaults to ~/.egan)."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "egan 1.0");

  std::optional<std::uint64_t> seed;
  const auto add_seed = [&](CLI::App* sub, const char* what) { sub->add_option("--seed", seed, what); };

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "write a synthetic dataset directory");
  ConfigFlags mk_cfg;
  std::string mk_out;
  std::optional<int> mk_n, mk_res;
  mk_cfg.add(mk);
  mk->add_option("--out", mk_out, "output directory")->required();
  mk->add_option("--n", mk_n, "number of images");
  mk->add_option("--resolution", mk_res, "32 or 64");
  add_seed(mk, "dataset seed");

  // train
  auto* tr = app.add_subcommand("train", "train G, D, C and C_n");
  ConfigFlags tr_cfg;
  std::string tr_data, tr_out, tr_resume;
  std::optional<std::int64_t> tr_steps;
  int tr_log = 100;
  tr_cfg.add(tr);
  tr->add_option("--data", tr_data, "dataset directory (default: synthetic data from the config)");
  tr->add_option("--out", tr_out, "run directory or run name under $EGAN_HOME/runs (default: default)");
  tr->add_option("--resume", tr_resume, "checkpoint or run directory to continue from");
  tr->add_option("--steps", tr_steps, "total step count to reach");
  tr->add_option("--log-every", tr_log, "print metrics every N steps (0: quiet)");
  add_seed(tr, "training seed");

  // edit
  auto* ed = app.add_subcommand("edit", "edit attributes of real images");
  std::string ed_ckpt, ed_in, ed_manifest, ed_out = "edited.png";
  std::vector<std::string> ed_sets, ed_source;
  ed->add_option("--ckpt", ed_ckpt, "checkpoint, run directory or run name");
  ed->add_option("--in", ed_in, "input PNG")->check(CLI::ExistingFile);
  ed->add_option("--set", ed_sets, "target attribute, name=value in [-1,1] (repeatable)");
  ed->add_option("--source", ed_source, "override the predicted source attribute, name=value (repeatable)");
  ed->add_option("--manifest", ed_manifest, "batch file: one '<png> name=value ...' per line")
      ->check(CLI::ExistingFile);
  ed->add_option("--out", ed_out, "output PNG, or output directory with --manifest");
  add_seed(ed, "accepted for uniformity; editing is deterministic");

  // generate
  auto* ge = app.add_subcommand("generate", "sample novel images with chosen attributes");
  std::string ge_ckpt, ge_attrs, ge_out = "generated.png";
  int ge_n = 16;
  ge->add_option("--ckpt", ge_ckpt, "checkpoint, run directory or run name");
  ge->add_option("--attrs", ge_attrs, "comma-separated values, one per attribute")->required();
  ge->add_option("--n", ge_n, "number of samples, laid out as a square grid");
  ge->add_option("--out", ge_out, "output grid PNG");
  add_seed(ge, "latent seed");

  // interpolate
  auto* ip = app.add_subcommand("interpolate", "walk linearly between two latent/attribute endpoints");
  std::string ip_ckpt, ip_a, ip_b, ip_in_a, ip_in_b, ip_out = "interpolation.png";
  int ip_steps = 8;
  ip->add_option("--ckpt", ip_ckpt, "checkpoint, run directory or run name");
  ip->add_option("--attrs-a", ip_a, "attributes at the start");
  ip->add_option("--attrs-b", ip_b, "attributes at the end");
  ip->add_option("--in-a", ip_in_a, "start from an inverted image")->check(CLI::ExistingFile);
  ip->add_option("--in-b", ip_in_b, "end at an inverted image")->check(CLI::ExistingFile);
  ip->add_option("--steps", ip_steps, "frames including both endpoints");
  ip->add_option("--out", ip_out, "output filmstrip PNG");
  add_seed(ip, "seed for endpoints given by attributes only");

  // pose
  auto* po = app.add_subcommand("pose", "walk from an image to its mirror image in latent space");
  std::string po_ckpt, po_in, po_axis = "horizontal", po_out = "pose.png";
  int po_steps = 8;
  po->add_option("--ckpt", po_ckpt, "checkpoint, run directory or run name");
  po->add_option("--in", po_in, "input PNG")->required()->check(CLI::ExistingFile);
  po->add_option("--steps", po_steps, "frames including both endpoints");
  po->add_option("--axis", po_axis, "mirror axis")->check(CLI::IsMember({"horizontal", "vertical"}));
  po->add_option("--out", po_out, "output filmstrip PNG");
  add_seed(po, "accepted for uniformity; pose walks are deterministic");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "FID, SSIM/PSNR, edit accuracy and inversion error");
  ConfigFlags ev_cfg;
  std::string ev_ckpt, ev_data, ev_cls, ev_out = "evaluation";
  ev_cfg.add(ev);
  ev->add_option("--ckpt", ev_ckpt, "checkpoint, run directory or run name");
  ev->add_option("--data", ev_data, "dataset directory (default: synthetic data from the config)");
  ev->add_option("--eval-classifier", ev_cls, "reuse a saved evaluation classifier directory");
  ev->add_option("--out", ev_out, "report directory");
  add_seed(ev, "evaluation seed");

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP JSON API over a checkpoint");
  std::string sv_ckpt, sv_host = "127.0.0.1";
  int sv_port = 8080;
  service::ServiceOptions sv_opt;
  sv->add_option("--ckpt", sv_ckpt, "checkpoint, run directory or run name");
  sv->add_option("--host", sv_host, "bind address");
  sv->add_option("--port", sv_port, "port (0: pick a free one)");
  sv->add_option("--workers", sv_opt.workers, "HTTP worker threads");
  sv->add_option("--max-concurrent", sv_opt.max_concurrent, "forward passes running at once");
  sv->add_option("--cors-origin", sv_opt.cors_origin, "Access-Control-Allow-Origin value");
  add_seed(sv, "accepted for uniformity; requests carry their own seeds");

  // config
  auto* cf = app.add_subcommand("config", "print the effective configuration");
  ConfigFlags cf_cfg;
  cf_cfg.add(cf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help, --version
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*mk) {
      auto c = mk_cfg.load();
      if (mk_n) c.dataset.n_images = *mk_n;
      if (mk_res) c.dataset.resolution = *mk_res;
      if (seed) c.dataset.seed = *seed;
      return cmd_make_dataset(mk_out, c);
    }
    if (*tr) {
      auto c = tr_cfg.load();
      if (tr_steps) c.train.steps = *tr_steps;
      if (seed) c.train.seed = *seed;
      return cmd_train(tr_data, tr_out, tr_resume, tr_log, c);
    }
    if (*ed) return cmd_edit(ed_ckpt, ed_in, ed_sets, ed_source, ed_manifest, ed_out);
    if (*ge) return cmd_generate(ge_ckpt, ge_attrs, ge_n, seed.value_or(1), ge_out);
    if (*ip) return cmd_interpolate(ip_ckpt, ip_a, ip_b, seed.value_or(1), ip_in_a, ip_in_b, ip_steps, ip_out);
    if (*po) return cmd_pose(po_ckpt, po_in, po_steps, po_axis, po_out);
    if (*ev) {
      auto c = ev_cfg.load();
      if (seed) c.evaluate.seed = *seed;
      return cmd_evaluate(ev_ckpt, ev_data, ev_cls, ev_out, c);
    }
    if (*sv) return cmd_serve(sv_ckpt, sv_host, sv_port, sv_opt);
    if (*cf) {
      std::cout << config::to_ini(cf_cfg.load());
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const editing::AttributeRangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    // Config validation failures.
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const training::NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\ndump: " << e.dump_path().string() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
