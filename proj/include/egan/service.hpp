#pragma once

#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include <json.hpp>

#include "egan/checkpoint.hpp"

namespace egan::service {

struct ServiceOptions {
  int max_frames = 64;
  int workers = 4;           // HTTP worker threads
  int max_concurrent = 2;    // forward passes running at once
  std::string cors_origin = "*";
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// JSON API over a frozen checkpoint. Images travel as base64 PNG. Every error
/// body is {"code", "message"}.
///
///   GET  /healthz          GET  /v1/attributes
///   POST /v1/invert        POST /v1/reconstruct    POST /v1/edit
///   POST /v1/generate      POST /v1/interpolate
///
/// Attribute maps may be partial. Missing entries take the source image's
/// predicted value, or 0 when the request starts from a latent vector.
class Service {
 public:
  Service(Checkpoint checkpoint, ServiceOptions options = {});

  /// Transport-independent dispatch. Thread-safe.
  Response handle(std::string_view method, std::string_view path, std::string_view body) const;

  const Checkpoint& checkpoint() const { return checkpoint_; }
  const ServiceOptions& options() const { return options_; }

 private:
  Checkpoint checkpoint_;
  ServiceOptions options_;
  std::string id_;
  std::unique_ptr<std::counting_semaphore<>> compute_slots_;

  friend struct Handlers;
};

/// HTTP/1.1 front end with CORS and a fixed worker pool.
class Server {
 public:
  explicit Server(const Service& service);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Returns the bound port (an ephemeral one when `port` is 0), or -1.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string base64_encode(std::string_view bytes);
/// Accepts standard base64 with or without padding; throws std::invalid_argument.
std::string base64_decode(std::string_view text);

}  // namespace egan::service
