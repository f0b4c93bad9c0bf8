#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "egan/checkpoint.hpp"
#include "egan/dataset.hpp"
#include "egan/metrics.hpp"

namespace egan::evaluation {

struct EvaluationConfig {
  int fid_samples = 1024;      // per side, per repetition
  int fid_pool = 2048;         // generated and noise images drawn once; subsets come from these
  int fid_repetitions = 10;
  int inversion_samples = 500;
  std::uint64_t seed = 1;
  metrics::EvalClassifierConfig classifier;

  void validate() const;
};

nlohmann::json to_json(const EvaluationConfig& config);

/// Everything the report needs, as JSON. `train` feeds the evaluation
/// classifier (unless one is given) and the real side of FID; `test` is the
/// held-out split used for reconstruction, editing and classifier accuracy.
/// Single-threaded and seeded, so equal inputs give byte-equal reports.
nlohmann::json evaluate(const Checkpoint& checkpoint, const Dataset& train, const Dataset& test,
                        const EvaluationConfig& config, const metrics::EvalClassifier* classifier = nullptr);

/// Human-readable summary of an evaluate() report.
std::string format_report(const nlohmann::json& report);

/// True when the analytic oracle can judge this schema and resolution.
bool oracle_applies(const AttributeSchema& schema, int resolution);

}  // namespace egan::evaluation
