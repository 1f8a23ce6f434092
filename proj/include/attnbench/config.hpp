#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnbench/attention.hpp"
#include "attnbench/corruption.hpp"
#include "attnbench/dataset.hpp"
#include "attnbench/vit.hpp"

namespace attnbench {

// Experiment configuration: a single JSON file controls the dataset, model
// geometry, training schedule, corruption and which (mechanism, scenario)
// cells to run. The raw file text is echoed into reports for provenance.

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double warmup_fraction = 0.1;  // of total steps
  double weight_decay = 0.05;
  bool augment = true;  // random crop (4-pixel pad) + horizontal flip

  void validate() const;
};

struct OutputConfig {
  // When set, wall_seconds is reported as 0 so identical runs produce
  // byte-identical report files.
  bool deterministic_timing = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  DatasetSpec dataset;
  ViTConfig model;  // variant field is overridden per mechanism
  TrainConfig train;
  CorruptionKind corruption_kind = CorruptionKind::kFog;
  double corruption_severity = 1.0;
  // Corruption stream seed; derived from the master seed unless the config
  // overrides it, so changing it never perturbs initialization or shuffling.
  std::optional<std::uint64_t> corruption_seed;
  std::vector<AttentionVariant> mechanisms;
  std::vector<Scenario> scenarios;
  OutputConfig output;
  std::string raw_text;  // the config file verbatim, echoed into reports

  void validate() const;
  std::uint64_t effective_corruption_seed() const;
};

// Builds the per-mechanism model configuration (variant set, dataset
// geometry applied, heads/head_dim synced).
ViTConfig model_config_for(const ExperimentConfig& cfg,
                           AttentionVariant variant);

// A complete default configuration (synthetic dataset) used when no file is
// given; every field can be overridden by the JSON.
ExperimentConfig default_config();

// Parses JSON text. Unknown keys are rejected, so typos fail loudly rather
// than silently falling back to defaults.
ExperimentConfig parse_config(const std::string& json_text);

// Reads and parses a config file.
ExperimentConfig load_config(const std::string& path);

// Serializes the effective configuration back to canonical JSON (used by
// `--print-config` style inspection and tests).
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace attnbench
