#include "egan/checkpoint.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace egan {
namespace fs = std::filesystem;
namespace {

constexpr char kBlobMagic[8] = {'E', 'G', 'A', 'N', 'P', 'A', 'R', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("parameter blob truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

ParameterBlob state_blob(const ModelState& s, Network n) {
  ParameterBlob b;
  b.names = s.param_names(n);
  for (const auto* p : s.params(n)) b.tensors.push_back(*p);
  return b;
}

ParameterBlob optimizer_blob(const ModelState& s, Network n) {
  ParameterBlob b;
  const auto names = s.param_names(n);
  const auto& a = s.adam(n);
  for (std::size_t i = 0; i < names.size(); ++i) {
    b.names.push_back("m." + names[i]);
    b.tensors.push_back(a.m.at(i));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    b.names.push_back("v." + names[i]);
    b.tensors.push_back(a.v.at(i));
  }
  return b;
}

void restore(std::vector<Tensor<float>*> dst, const std::vector<std::string>& names, const ParameterBlob& blob,
             std::size_t offset, const std::string& prefix, const std::string& what) {
  if (blob.tensors.size() < offset + dst.size())
    throw std::runtime_error(what + ": expected " + std::to_string(dst.size()) + " tensors");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const auto& name = blob.names[offset + i];
    const auto& t = blob.tensors[offset + i];
    if (name != prefix + names[i] || t.shape() != dst[i]->shape())
      throw std::runtime_error(what + ": tensor " + name + " " + shape_string(t.shape()) + " does not match " +
                               prefix + names[i] + " " + shape_string(dst[i]->shape()));
    *dst[i] = t;
  }
}

}  // namespace

std::vector<std::uint8_t> encode_blob(const ParameterBlob& blob) {
  if (blob.names.size() != blob.tensors.size()) throw std::invalid_argument("blob: names/tensors mismatch");
  std::vector<std::uint8_t> out(std::begin(kBlobMagic), std::end(kBlobMagic));
  put_u32(out, static_cast<std::uint32_t>(blob.tensors.size()));
  for (std::size_t i = 0; i < blob.tensors.size(); ++i) {
    const auto& name = blob.names[i];
    const auto& t = blob.tensors[i];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ParameterBlob decode_blob(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kBlobMagic || std::memcmp(bytes.data(), kBlobMagic, sizeof kBlobMagic) != 0)
    throw std::runtime_error("not a parameter blob (bad magic)");
  std::vector<std::uint8_t> rest(bytes.begin() + sizeof kBlobMagic, bytes.end());
  Reader r(rest);
  ParameterBlob blob;
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    blob.names.push_back(r.str(r.u32()));
    Shape shape(r.u32());
    for (auto& d : shape) d = static_cast<int>(r.u32());
    Tensor<float> t(shape);
    for (auto& v : t.values()) v = r.f32();
    blob.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw std::runtime_error("parameter blob has trailing bytes");
  return blob;
}

void write_blob(const fs::path& path, const ParameterBlob& blob) {
  const auto bytes = encode_blob(blob);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

ParameterBlob read_blob(const fs::path& path) {
  try {
    return decode_blob(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const NetworkConfig& c) {
  return {{"d_z", c.d_z},
          {"n_a", c.n_a},
          {"resolution", c.resolution},
          {"g_channels", c.g_channels},
          {"d_channels", c.d_channels},
          {"c_channels", c.c_channels},
          {"f_d", c.f_d},
          {"f_c", c.f_c},
          {"cn_hidden", c.cn_hidden},
          {"cn_layers", c.cn_layers},
          {"leaky_slope", c.leaky_slope}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.d_z = j.at("d_z");
  c.n_a = j.at("n_a");
  c.resolution = j.at("resolution");
  c.g_channels = j.at("g_channels");
  c.d_channels = j.at("d_channels");
  c.c_channels = j.at("c_channels");
  c.f_d = j.at("f_d");
  c.f_c = j.at("f_c");
  c.cn_hidden = j.at("cn_hidden");
  c.cn_layers = j.at("cn_layers");
  c.leaky_slope = j.at("leaky_slope");
  c.validate();
  return c;
}

std::string short_digest(std::string_view bytes) {
  static const bool ready = sodium_init() >= 0;
  if (!ready) throw std::runtime_error("libsodium initialisation failed");
  unsigned char out[16];
  crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), nullptr, 0);
  char hex[sizeof out * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, out, sizeof out);
  return hex;
}

std::string schema_hash(const AttributeSchema& schema) {
  std::string joined;
  for (const auto& n : schema.names) joined += n + '\n';
  return short_digest(joined);
}

std::string Checkpoint::id() const { return path.filename().string() + "-" + short_digest(manifest.dump()).substr(0, 12); }

void save_checkpoint(const ModelState& state, const AttributeSchema& schema, const fs::path& dir,
                     const nlohmann::json& metrics, const nlohmann::json& extra) {
  if (schema.count() != state.config.n_a)
    throw std::invalid_argument("checkpoint: schema has " + std::to_string(schema.count()) +
                                " attributes but the networks expect " + std::to_string(state.config.n_a));
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "egan-checkpoint";
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["step"] = state.step;
  manifest["network"] = to_json(state.config);
  manifest["schema"] = schema.names;
  manifest["metrics"] = metrics;
  std::ostringstream rng;
  rng << state.rng;
  manifest["rng_state"] = rng.str();
  for (Network n : kAllNetworks) {
    const std::string name(network_name(n));
    write_blob(dir / (name + ".bin"), state_blob(state, n));
    write_blob(dir / (name + ".adam.bin"), optimizer_blob(state, n));
    manifest["parameters"][name] = name + ".bin";
    manifest["optimizer"][name] = {{"file", name + ".adam.bin"}, {"step", state.adam(n).step}};
  }
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

fs::path resolve_checkpoint(const fs::path& path) {
  if (fs::exists(path / "manifest.json")) return path;
  if (fs::exists(path / "latest")) {
    std::ifstream f(path / "latest");
    std::string name;
    std::getline(f, name);
    if (!name.empty() && fs::exists(path / name / "manifest.json")) return path / name;
  }
  throw std::runtime_error("no checkpoint found at " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  Checkpoint ck;
  ck.path = resolve_checkpoint(path);
  std::ifstream f(ck.path / "manifest.json");
  try {
    ck.manifest = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error((ck.path / "manifest.json").string() + ": " + e.what());
  }
  if (ck.manifest.value("format", "") != "egan-checkpoint" ||
      ck.manifest.value("format_version", 0) != kCheckpointFormatVersion)
    throw std::runtime_error(ck.path.string() + ": unsupported checkpoint format");
  const NetworkConfig config = network_config_from_json(ck.manifest.at("network"));
  ck.schema.names = ck.manifest.at("schema").get<std::vector<std::string>>();
  ck.schema.validate();
  if (ck.schema.count() != config.n_a) throw std::runtime_error(ck.path.string() + ": schema does not match n_a");

  ModelState& s = ck.state;
  s = init_params<float>(config, 0);
  for (Network n : kAllNetworks) {
    const std::string name(network_name(n));
    const auto names = s.param_names(n);
    restore(s.params(n), names, read_blob(ck.path / ck.manifest.at("parameters").at(name).get<std::string>()), 0,
            "", name + ".bin");
    const auto& opt = ck.manifest.at("optimizer").at(name);
    const ParameterBlob ob = read_blob(ck.path / opt.at("file").get<std::string>());
    auto& a = s.adam(n);
    std::vector<Tensor<float>*> m, v;
    for (auto& t : a.m) m.push_back(&t);
    for (auto& t : a.v) v.push_back(&t);
    restore(m, names, ob, 0, "m.", name + ".adam.bin");
    restore(v, names, ob, names.size(), "v.", name + ".adam.bin");
    a.step = opt.at("step").get<std::int64_t>();
  }
  s.step = ck.manifest.at("step").get<std::int64_t>();
  std::istringstream rng(ck.manifest.at("rng_state").get<std::string>());
  rng >> s.rng;
  if (!rng) throw std::runtime_error(ck.path.string() + ": corrupt rng_state");
  return ck;
}

fs::path numbered_checkpoint(const fs::path& root, std::int64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt-%08lld", static_cast<long long>(step));
  return root / name;
}

void write_latest_pointer(const fs::path& root, const fs::path& checkpoint) {
  const fs::path tmp = root / "latest.tmp";
  write_text(tmp, checkpoint.filename().string() + "\n");
  fs::rename(tmp, root / "latest");
}

bool states_identical(const ModelState& a, const ModelState& b) {
  if (!(a.config == b.config) || a.step != b.step || a.rng != b.rng) return false;
  for (Network n : kAllNetworks) {
    const auto pa = a.params(n), pb = b.params(n);
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (pa[i]->shape() != pb[i]->shape() ||
          std::memcmp(pa[i]->data(), pb[i]->data(), pa[i]->size() * sizeof(float)) != 0)
        return false;
    const auto& oa = a.adam(n);
    const auto& ob = b.adam(n);
    if (oa.step != ob.step || oa.m.size() != ob.m.size()) return false;
    for (std::size_t i = 0; i < oa.m.size(); ++i)
      if (std::memcmp(oa.m[i].data(), ob.m[i].data(), oa.m[i].size() * sizeof(float)) != 0 ||
          std::memcmp(oa.v[i].data(), ob.v[i].data(), oa.v[i].size() * sizeof(float)) != 0)
        return false;
  }
  return true;
}

}  // namespace egan
