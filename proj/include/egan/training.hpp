#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "egan/dataset.hpp"
#include "egan/losses.hpp"
#include "egan/models.hpp"

namespace egan::training {

struct Hyper {
  nn::AdamConfig adam_g;
  nn::AdamConfig adam_d;
  nn::AdamConfig adam_c;
  nn::AdamConfig adam_cn;
  double lambda_a = 1.0;
  double lambda_at = 1.0;

  const nn::AdamConfig& adam(Network n) const;
};

struct StepMetrics {
  std::int64_t step = 0;  // counter value after the update
  losses::LossReport losses;
  double d_real = 0;  // mean D output on the real half of the batch
  double d_fake = 0;
  double classifier_accuracy = 0;  // C on real images, threshold 0.5
  double wall_ms = 0;

  nlohmann::json to_json(bool with_wall_clock = true) const;
};

/// Raised when a loss or gradient is non-finite. The update of the failing
/// phase has not been applied.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& message, nlohmann::json snapshot)
      : std::runtime_error(message), snapshot_(std::move(snapshot)) {}
  const nlohmann::json& snapshot() const noexcept { return snapshot_; }
  const std::filesystem::path& dump_path() const noexcept { return dump_path_; }
  void set_dump_path(std::filesystem::path p) { dump_path_ = std::move(p); }

 private:
  nlohmann::json snapshot_;
  std::filesystem::path dump_path_;
};

/// One iteration in the order D, C, G, C_n. Each phase updates only its own
/// network. C_n is fit on the D/C features of the generated images seen by the
/// G phase, taken before G's update.
StepMetrics train_step(ModelState& state, const Batch& batch, nn::Rng& rng, const Hyper& hyper);

/// Loss and parameter gradient of one network's objective with everything
/// else held fixed.
template <typename T>
struct PhaseResult {
  double loss = 0;
  std::vector<Tensor<T>> grads;  // empty unless requested
  std::vector<bool> kinks;       // empty unless requested
  double d_real = 0, d_fake = 0, accuracy = 0;
  double adversarial = 0, attr_real = 0, attr_random = 0;
  Tensor<T> z_tilde, f_d, f_c;  // generator phase only
};

struct PhaseOptions {
  bool grads = true;
  bool kinks = false;
};

template <typename T>
PhaseResult<T> discriminator_phase(const ModelStateT<T>& s, const Tensor<T>& real, const Tensor<T>& fake,
                                   PhaseOptions opt = {});
template <typename T>
PhaseResult<T> classifier_phase(const ModelStateT<T>& s, const Tensor<T>& real, const Tensor<T>& labels,
                                PhaseOptions opt = {});
/// When z_tilde is null it is computed from C_n on G(z, y_a) and treated as a
/// constant.
template <typename T>
PhaseResult<T> generator_phase(const ModelStateT<T>& s, const Tensor<T>& z, const Tensor<T>& y_a,
                               const Tensor<T>& y_at, const Tensor<T>* z_tilde, double lambda_a, double lambda_at,
                               PhaseOptions opt = {});
template <typename T>
PhaseResult<T> connection_phase(const ModelStateT<T>& s, const Tensor<T>& f_d, const Tensor<T>& f_c,
                                const Tensor<T>& y_a, const Tensor<T>& z, PhaseOptions opt = {});

struct AuditOptions {
  double step = 1e-4;
  int samples_per_tensor = 4;
  // Below this magnitude the O(h²) truncation error of the central difference
  // (about 1e-8 at h = 1e-4 here) is no longer small next to the gradient, so
  // the absolute error is compared instead.
  double small_gradient = 1e-5;
  double lambda_a = 1.0;
  double lambda_at = 1.0;
  std::uint64_t seed = 11;
};

struct AuditEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double error = 0;  // relative, or absolute for small gradients
  bool absolute = false;
};

struct AuditReport {
  Network component = Network::generator;
  std::vector<AuditEntry> entries;
  int skipped = 0;  // probes rejected for crossing a non-differentiable point
  double max_relative_error = 0;
  double max_absolute_error = 0;

  bool passed(double relative_tolerance = 1e-3, double absolute_tolerance = 1e-6) const;
};

/// Central differences in double precision against the analytic gradient of
/// `component`'s objective on `batch`.
AuditReport finite_difference_audit(const ModelState& state, const Batch& batch, Network component,
                                    const AuditOptions& options = {});

struct TrainConfig {
  NetworkConfig network;
  Hyper hyper;
  int batch_size = 64;
  std::int64_t steps = 6000;  // total step count to reach
  std::int64_t checkpoint_every = 1000;
  std::uint64_t seed = 1;
  std::filesystem::path output;  // checkpoint root; metrics.jsonl is written here

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::int64_t final_step = 0;
  std::optional<StepMetrics> last;
};

using StepCallback = std::function<void(const StepMetrics&)>;

/// Runs until state.step == config.steps. With `resume`, the networks, optimizer
/// moments, step counter and RNG come from that checkpoint and
/// config.network is ignored.
TrainResult train(const TrainConfig& config, const Dataset& data,
                  const std::optional<std::filesystem::path>& resume = std::nullopt,
                  const StepCallback& on_step = {});

}  // namespace egan::training
