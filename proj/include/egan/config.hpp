#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "egan/dataset.hpp"
#include "egan/evaluation.hpp"
#include "egan/training.hpp"

namespace egan::config {

/// Everything one pipeline run needs. Files use INI sections:
///   [dataset] [network] [train] [adam_g] [adam_d] [adam_c] [adam_cn] [evaluate]
struct RunConfig {
  SyntheticConfig dataset;
  int held_out = 200;  // last images of the dataset kept out of training
  training::TrainConfig train;
  evaluation::EvaluationConfig evaluate;
};

/// Widths sized for a single CPU core: a 6000-step run takes about 20 minutes.
NetworkConfig desk_scale_network();
/// Desk-scale network with the dataset and training defaults.
RunConfig default_run_config();

/// Sets "section.key" from its text form. Throws ParseError on an unknown key
/// or a value that does not parse.
void set_value(RunConfig& config, std::string_view dotted_key, std::string_view value);
std::vector<std::string> known_keys();

/// Applies an INI document on top of `config`.
void apply_ini(RunConfig& config, std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Every key, grouped by section; floating point values round-trip exactly.
std::string to_ini(const RunConfig& config);

}  // namespace egan::config
