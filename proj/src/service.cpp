#include "egan/service.hpp"

#include <random>

#include <sodium.h>

#include "egan/editing.hpp"
#include "egan/image_io.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen's parameter names.
#include <httplib.h>

namespace egan::service {
using nlohmann::json;

std::string base64_encode(std::string_view bytes) {
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                    variant);
  out.pop_back();  // terminating NUL
  return out;
}

std::string base64_decode(std::string_view text) {
  const bool padded = text.find('=') != std::string_view::npos;
  const int variant = padded || text.size() % 4 == 0 ? sodium_base64_VARIANT_ORIGINAL
                                                     : sodium_base64_VARIANT_ORIGINAL_NO_PADDING;
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), "\r\n",
                        &len, &end, variant) != 0 ||
      end != text.data() + text.size())
    throw std::invalid_argument("malformed base64");
  out.resize(len);
  return out;
}

namespace {

struct ApiError : std::runtime_error {
  ApiError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

Response error(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

ApiError bad_request(const std::string& message) { return {400, "bad_request", message}; }

/// Holds one of the service's compute slots for its lifetime.
class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

const json& require(const json& body, const char* key) {
  if (!body.contains(key)) throw bad_request(std::string("missing field '") + key + "'");
  return body.at(key);
}

}  // namespace

struct Handlers {
  const Service& svc;

  const ModelState& state() const { return svc.checkpoint_.state; }
  const AttributeSchema& schema() const { return svc.checkpoint_.schema; }
  int resolution() const { return state().config.resolution; }

  Tensor<float> decode_image(const json& v) const {
    if (!v.is_string()) throw ApiError(400, "bad_image", "image must be a base64-encoded PNG string");
    std::string bytes;
    try {
      bytes = base64_decode(v.get_ref<const std::string&>());
    } catch (const std::invalid_argument&) {
      throw ApiError(400, "bad_image", "image is not valid base64");
    }
    image::RgbImage rgb;
    try {
      rgb = image::decode_png(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
    } catch (const std::exception&) {
      throw ApiError(400, "bad_image", "image is not a readable PNG");
    }
    const int r = resolution();
    if (rgb.width != r || rgb.height != r)
      throw ApiError(422, "resolution_mismatch",
                     "image is " + std::to_string(rgb.width) + "×" + std::to_string(rgb.height) +
                         "; this checkpoint works on " + std::to_string(r) + "×" + std::to_string(r) + " images");
    return image::from_rgb(rgb);
  }

  static std::string encode_image(const Tensor<float>& x) {
    const auto png = image::encode_png(image::to_rgb(x.rank() == 4 ? x.row(0) : x));
    return base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  }

  /// `base` overridden by the entries of a name→value map.
  std::vector<float> attributes(const json* map, std::vector<float> base) const {
    if (!map || map->is_null()) return base;
    if (!map->is_object()) throw bad_request("attributes must be an object of name → value");
    for (const auto& [name, value] : map->items()) {
      const auto idx = schema().index_of(name);
      if (!idx) throw ApiError(422, "unknown_attribute", "unknown attribute '" + name + "'");
      if (!value.is_number()) throw bad_request("attribute '" + name + "' must be a number");
      const double v = value.get<double>();
      if (!(v >= -1.0 && v <= 1.0))
        throw ApiError(422, "attribute_range", "attribute '" + name + "' must lie in [-1, 1]");
      base[*idx] = static_cast<float>(v);
    }
    return base;
  }

  std::vector<float> latent(const json& v) const {
    if (!v.is_array() || static_cast<int>(v.size()) != state().config.d_z)
      throw bad_request("z must be an array of " + std::to_string(state().config.d_z) + " numbers");
    std::vector<float> z;
    for (const auto& e : v) {
      if (!e.is_number()) throw bad_request("z must contain numbers only");
      const double d = e.get<double>();
      if (!(d >= -1.0 && d <= 1.0)) throw ApiError(422, "latent_range", "z entries must lie in [-1, 1]");
      z.push_back(static_cast<float>(d));
    }
    return z;
  }

  json named(const Tensor<float>& y) const {
    json j = json::object();
    for (int a = 0; a < schema().count(); ++a) j[schema().names[a]] = y[a];
    return j;
  }

  Tensor<float> row(const std::vector<float>& v) const { return Tensor<float>({1, static_cast<int>(v.size())}, v); }

  /// An interpolation endpoint: {z, attributes} or {image, attributes}.
  std::pair<std::vector<float>, std::vector<float>> endpoint(const json& e) const {
    if (!e.is_object()) throw bad_request("endpoints must be objects with 'z' or 'image'");
    const json* attrs = e.contains("attributes") ? &e.at("attributes") : nullptr;
    if (e.contains("image")) {
      const auto x = decode_image(e.at("image"));
      const auto pred = editing::predict_attributes(state(), x);
      const auto y = attributes(attrs, pred.storage());
      const auto z = editing::invert_image(state(), x, &pred);
      return {z.storage(), y};
    }
    if (e.contains("z")) return {latent(e.at("z")), attributes(attrs, std::vector<float>(schema().count(), 0.0f))};
    throw bad_request("endpoint needs 'z' or 'image'");
  }

  json info() const {
    return {{"attributes", schema().names},
            {"d_z", state().config.d_z},
            {"resolution", resolution()},
            {"checkpoint_id", svc.id_},
            {"value_range", {-1.0, 1.0}},
            {"max_frames", svc.options_.max_frames}};
  }

  json health() const {
    return {{"status", "ok"}, {"checkpoint_id", svc.id_}, {"schema_hash", schema_hash(schema())},
            {"step", state().step}};
  }

  json invert(const json& body) const {
    const auto x = decode_image(require(body, "image"));
    SlotGuard slot(*svc.compute_slots_);
    const auto pred = editing::predict_attributes(state(), x);
    const auto z = editing::invert_image(state(), x, &pred);
    return {{"z", z.storage()}, {"predicted_attributes", named(pred)}};
  }

  json reconstruct(const json& body) const {
    const auto x = decode_image(require(body, "image"));
    const json* attrs = body.contains("attributes") ? &body.at("attributes") : nullptr;
    SlotGuard slot(*svc.compute_slots_);
    const auto pred = editing::predict_attributes(state(), x);
    const auto y = row(attributes(attrs, pred.storage()));
    return {{"image", encode_image(editing::reconstruct(state(), x, &y))}};
  }

  json edit(const json& body) const {
    const json* attrs = body.contains("attributes") ? &body.at("attributes") : nullptr;
    if (body.contains("image")) {
      const auto x = decode_image(body.at("image"));
      SlotGuard slot(*svc.compute_slots_);
      const auto pred = editing::predict_attributes(state(), x);
      const auto target = row(attributes(attrs, pred.storage()));
      return {{"image", encode_image(editing::edit_attributes(state(), x, target, &pred))}};
    }
    if (body.contains("z")) {
      const auto z = latent(body.at("z"));
      const auto y = attributes(attrs, std::vector<float>(schema().count(), 0.0f));
      SlotGuard slot(*svc.compute_slots_);
      return {{"image", encode_image(editing::generate_novel(state(), row(z), row(y)))}};
    }
    throw bad_request("edit needs 'image' or 'z'");
  }

  json generate(const json& body) const {
    const json* attrs = body.contains("attributes") ? &body.at("attributes") : nullptr;
    const auto y = attributes(attrs, std::vector<float>(schema().count(), 0.0f));
    std::uint64_t seed;
    if (body.contains("seed") && !body.at("seed").is_null()) {
      if (!body.at("seed").is_number_unsigned()) throw bad_request("seed must be a non-negative integer");
      seed = body.at("seed").get<std::uint64_t>();
    } else {
      seed = std::random_device{}();  // 32 bits: exact in JavaScript numbers
    }
    nn::Rng rng(seed);
    const auto z = sample_latent(1, state().config.d_z, rng);
    SlotGuard slot(*svc.compute_slots_);
    const auto img = editing::generate_novel(state(), z, row(y));
    return {{"image", encode_image(img)}, {"z", z.storage()}, {"seed", seed}, {"attributes", named(row(y))}};
  }

  json interpolate(const json& body) const {
    const json& steps_v = require(body, "steps");
    if (!steps_v.is_number_integer()) throw bad_request("steps must be an integer");
    const auto steps = steps_v.get<std::int64_t>();
    if (steps < 2) throw bad_request("steps must be at least 2");
    if (steps > svc.options_.max_frames)
      throw ApiError(422, "too_many_frames", "at most " + std::to_string(svc.options_.max_frames) + " frames");
    const std::string mode = body.value("mode", "latent");
    Tensor<float> frames;
    if (mode == "pose") {
      const json& a = require(body, "a");
      if (!a.is_object() || !a.contains("image")) throw bad_request("pose mode needs a.image");
      const auto x = decode_image(a.at("image"));
      const std::string axis = body.value("axis", "horizontal");
      if (axis != "horizontal" && axis != "vertical") throw bad_request("axis must be horizontal or vertical");
      SlotGuard slot(*svc.compute_slots_);
      const auto pred = editing::predict_attributes(state(), x);
      const auto y = attributes(a.contains("attributes") ? &a.at("attributes") : nullptr, pred.storage());
      frames = editing::pose_walk(state(), x, static_cast<int>(steps), &y,
                                  axis == "horizontal" ? editing::FlipAxis::horizontal : editing::FlipAxis::vertical);
    } else if (mode == "latent") {
      SlotGuard slot(*svc.compute_slots_);
      const auto [za, ya] = endpoint(require(body, "a"));
      const auto [zb, yb] = endpoint(require(body, "b"));
      frames = editing::interpolate(state(), za, ya, zb, yb, static_cast<int>(steps));
    } else {
      throw bad_request("mode must be latent or pose");
    }
    json out = json::array();
    for (int i = 0; i < frames.dim(0); ++i) out.push_back(encode_image(frames.row(i)));
    return {{"frames", out}};
  }
};

Service::Service(Checkpoint checkpoint, ServiceOptions options)
    : checkpoint_(std::move(checkpoint)),
      options_(std::move(options)),
      id_(checkpoint_.id()),
      compute_slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, options_.max_concurrent))) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium failed to initialize");
  if (options_.max_frames < 2) throw std::invalid_argument("service: max_frames must be at least 2");
}

Response Service::handle(std::string_view method, std::string_view path, std::string_view body) const {
  const Handlers h{*this};
  try {
    if (path == "/healthz" || path == "/v1/attributes") {
      if (method != "GET") return error(405, "method_not_allowed", "use GET");
      return {200, path == "/healthz" ? h.health() : h.info()};
    }
    using Fn = json (Handlers::*)(const json&) const;
    Fn fn = nullptr;
    if (path == "/v1/invert") fn = &Handlers::invert;
    else if (path == "/v1/reconstruct") fn = &Handlers::reconstruct;
    else if (path == "/v1/edit") fn = &Handlers::edit;
    else if (path == "/v1/generate") fn = &Handlers::generate;
    else if (path == "/v1/interpolate") fn = &Handlers::interpolate;
    if (!fn) return error(404, "not_found", "no such endpoint");
    if (method != "POST") return error(405, "method_not_allowed", "use POST");
    json parsed;
    try {
      parsed = json::parse(body);
    } catch (const json::parse_error&) {
      return error(400, "bad_request", "body is not valid JSON");
    }
    if (!parsed.is_object()) return error(400, "bad_request", "body must be a JSON object");
    return {200, (h.*fn)(parsed)};
  } catch (const ApiError& e) {
    return error(e.status, e.code, e.what());
  } catch (const editing::AttributeRangeError& e) {
    return error(422, "attribute_range", e.what());
  } catch (const json::exception& e) {
    return error(400, "bad_request", "malformed request fields");
  } catch (const std::exception&) {
    return error(500, "internal", "internal error");
  }
}

struct Server::Impl {
  explicit Impl(const Service& s) : service(s) {}
  const Service& service;
  httplib::Server http;
};

Server::Server(const Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& http = impl_->http;
  const int workers = std::max(1, service.options().workers);
  http.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  http.set_payload_max_length(16 << 20);
  http.set_default_headers({{"Access-Control-Allow-Origin", service.options().cors_origin},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                            {"Access-Control-Allow-Headers", "Content-Type"}});
  const auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const Response r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  http.Get(".*", forward);
  http.Post(".*", forward);
  http.Put(".*", forward);
  http.Delete(".*", forward);
  http.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    res.status = 500;
    res.set_content(R"({"code":"internal","message":"internal error"})", "application/json");
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool Server::listen_after_bind() { return impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace egan::service
