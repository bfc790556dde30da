// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "mdunet/config.hpp"

namespace mdunet {

/// Everything one CLI invocation needs, read from a single JSON file.
struct RunConfig {
  std::string data;
  std::string out;
  std::string pred;        // defaults to <out>/predictions
  std::string checkpoint;  // defaults to <out>/model.ckpt
  std::string task = "synthetic";
  ModelConfig model;
  LossWeights loss;        // empty betas mean all ones
  TrainSchedule schedule;
  SynthParams synth;
  PreprocessParams preprocess;
  EnsembleSpec ensemble;   // no runs means a single run

  /// Revalidates every section and the cross-field constraints.
  void validate() const;
  LossWeights resolved_loss() const;
};

/// Parses a JSON document; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved config (every default spelled out).
std::string run_config_to_json(const RunConfig& c);

/// Applies one override, addressed by a dotted key ("schedule.total_epochs")
/// with a JSON value ("40", "[1,1,1]", "\"CT\"").
void apply_override(RunConfig& c, const std::string& key, const std::string& json_value);

}  // namespace mdunet
