#include "egan/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace egan::config {
namespace pt = boost::property_tree;

NetworkConfig desk_scale_network() {
  NetworkConfig n;
  n.d_z = 4;
  n.g_channels = 64;
  n.d_channels = 16;
  n.c_channels = 16;
  n.f_d = 256;
  n.f_c = 256;
  n.cn_hidden = 256;
  n.cn_layers = 2;
  return n;
}

RunConfig default_run_config() {
  RunConfig c;
  c.train.network = desk_scale_network();
  return c;
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end)
    throw ParseError(0, std::string(key) + ": cannot parse '" + std::string(text) + "'");
  return v;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

struct Binding {
  std::string section, key;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

template <typename T>
Binding bind(std::string section, std::string key, T& field) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key), [&field] { return format_number(field); },
          [&field, name](std::string_view v) { field = parse_number<T>(name, v); }};
}

std::vector<Binding> bindings(RunConfig& c) {
  std::vector<Binding> b;
  b.push_back(bind("dataset", "resolution", c.dataset.resolution));
  b.push_back(bind("dataset", "n_images", c.dataset.n_images));
  b.push_back(bind("dataset", "seed", c.dataset.seed));
  b.push_back(bind("dataset", "held_out", c.held_out));

  NetworkConfig& n = c.train.network;
  b.push_back(bind("network", "d_z", n.d_z));
  b.push_back(bind("network", "n_a", n.n_a));
  b.push_back(bind("network", "resolution", n.resolution));
  b.push_back(bind("network", "g_channels", n.g_channels));
  b.push_back(bind("network", "d_channels", n.d_channels));
  b.push_back(bind("network", "c_channels", n.c_channels));
  b.push_back(bind("network", "f_d", n.f_d));
  b.push_back(bind("network", "f_c", n.f_c));
  b.push_back(bind("network", "cn_hidden", n.cn_hidden));
  b.push_back(bind("network", "cn_layers", n.cn_layers));
  b.push_back(bind("network", "leaky_slope", n.leaky_slope));

  training::TrainConfig& t = c.train;
  b.push_back(bind("train", "batch_size", t.batch_size));
  b.push_back(bind("train", "steps", t.steps));
  b.push_back(bind("train", "checkpoint_every", t.checkpoint_every));
  b.push_back(bind("train", "seed", t.seed));
  b.push_back(bind("train", "lambda_a", t.hyper.lambda_a));
  b.push_back(bind("train", "lambda_at", t.hyper.lambda_at));
  for (auto [section, adam] : {std::pair{"adam_g", &t.hyper.adam_g}, std::pair{"adam_d", &t.hyper.adam_d},
                               std::pair{"adam_c", &t.hyper.adam_c}, std::pair{"adam_cn", &t.hyper.adam_cn}}) {
    b.push_back(bind(section, "lr", adam->lr));
    b.push_back(bind(section, "beta1", adam->beta1));
    b.push_back(bind(section, "beta2", adam->beta2));
    b.push_back(bind(section, "eps", adam->eps));
  }

  evaluation::EvaluationConfig& e = c.evaluate;
  b.push_back(bind("evaluate", "fid_samples", e.fid_samples));
  b.push_back(bind("evaluate", "fid_pool", e.fid_pool));
  b.push_back(bind("evaluate", "fid_repetitions", e.fid_repetitions));
  b.push_back(bind("evaluate", "inversion_samples", e.inversion_samples));
  b.push_back(bind("evaluate", "seed", e.seed));
  b.push_back(bind("evaluate", "classifier_channels", e.classifier.channels));
  b.push_back(bind("evaluate", "classifier_features", e.classifier.features));
  b.push_back(bind("evaluate", "classifier_steps", e.classifier.steps));
  b.push_back(bind("evaluate", "classifier_batch_size", e.classifier.batch_size));
  b.push_back(bind("evaluate", "classifier_lr", e.classifier.lr));
  b.push_back(bind("evaluate", "classifier_seed", e.classifier.seed));
  return b;
}

}  // namespace

void set_value(RunConfig& config, std::string_view dotted_key, std::string_view value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string_view::npos) throw ParseError(0, "expected section.key, got '" + std::string(dotted_key) + "'");
  const auto section = dotted_key.substr(0, dot), key = dotted_key.substr(dot + 1);
  for (auto& b : bindings(config))
    if (b.section == section && b.key == key) {
      b.set(value);
      return;
    }
  throw ParseError(0, "unknown config key '" + std::string(dotted_key) + "'");
}

std::vector<std::string> known_keys() {
  RunConfig scratch;
  std::vector<std::string> out;
  for (const auto& b : bindings(scratch)) out.push_back(b.section + "." + b.key);
  return out;
}

void apply_ini(RunConfig& config, std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(static_cast<int>(e.line()), e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ParseError(0, "key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set_value(config, section + "." + key, value.data());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig c = default_run_config();
  apply_ini(c, ss.str());
  return c;
}

std::string to_ini(const RunConfig& config) {
  RunConfig copy = config;
  std::ostringstream o;
  std::string section;
  for (const auto& b : bindings(copy)) {
    if (b.section != section) {
      o << (section.empty() ? "" : "\n") << "[" << b.section << "]\n";
      section = b.section;
    }
    o << b.key << " = " << b.get() << "\n";
  }
  return o.str();
}

}  // namespace egan::config
