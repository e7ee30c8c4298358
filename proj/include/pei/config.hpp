#pragma once

// Experiment configuration, read from JSON. Unknown keys are rejected so a
// typo cannot silently fall back to a default. Angles are in degrees.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pei/losses.hpp"
#include "pei/models.hpp"
#include "pei/physics.hpp"
#include "pei/synth.hpp"

namespace pei {

struct DatasetConfig {
  std::filesystem::path source_dir;  // PNG / TIFF images; empty selects synthetic
  int synthetic_count = 25;
  SynthOptions synthetic;
  int tile_size = 128;
  double test_fraction = 0.2;
  bool keep_reference = true;
};

struct OperatorConfig {
  double mask_fraction = 0.7;        // inpainting p
  int factor = 4;                    // pansharpening j
  double mtf_sigma = 0.0;            // <= 0 means sigma = j
  std::vector<double> srf;           // empty means flat
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double decay = 0.9;
  int decay_every_epochs = 1;
  int epochs = 200;
  int batch_size = 1;
  double weight_decay = 1e-8;
};

struct EvalConfig {
  std::vector<std::string> metrics;  // empty selects the task defaults
  bool write_images = true;
};

struct ExperimentConfig {
  Task task = Task::inpainting;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "run";
  DatasetConfig dataset;
  OperatorConfig op;
  NoiseModel noise;
  ReconNetConfig model;  // channels and factor are filled in from the dataset and operator
  LossConfig loss;
  OptimizerConfig optimizer;
  EvalConfig eval;

  /// Throws ConfigError describing the first problem found.
  void validate() const;
  /// Metric names to report, after applying task defaults.
  std::vector<std::string> metric_names() const;
};

/// Parses JSON text. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON rendering of every field, defaults included.
std::string dump_config(const ExperimentConfig& config);

}  // namespace pei
