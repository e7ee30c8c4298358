#pragma once

// Run directory layout under ExperimentConfig::output_dir:
//
//   data/manifest.json          tiles, splits and file names
//   data/<id>/y0.tif [y1.tif]   measurement parts (float32 TIFF)
//   data/<id>/mask.png          inpainting mask (255 = kept)
//   data/<id>/reference.tif     clean image, when keep_reference is set
//   train_log.csv               per-epoch mean of every loss term
//   checkpoints/final.bin, checkpoints/best.bin
//   eval/metrics.csv            one row per test tile plus a mean row
//   eval/recon/<id>.png         reconstructions (first three channels)

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pei/config.hpp"
#include "pei/metrics.hpp"
#include "pei/models.hpp"

namespace pei {

/// Independent RNG stream for (seed, label), e.g. a tile id.
std::mt19937_64 stream_rng(std::uint64_t seed, std::string_view label);

struct TileRecord {
  std::string id;
  std::string split;  // "train" or "test"
  std::vector<std::string> measurements;
  std::string mask;       // empty unless inpainting
  std::string reference;  // empty when not kept
};

struct DatasetManifest {
  Task task = Task::inpainting;
  int channels = 0;
  int height = 0;
  int width = 0;
  int factor = 1;
  std::vector<TileRecord> tiles;

  std::vector<const TileRecord*> split(std::string_view name) const;
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

std::filesystem::path data_dir(const ExperimentConfig& config);

/// Builds the dataset and writes it under <output_dir>/data.
DatasetManifest simulate(const ExperimentConfig& config);

/// Forward operator for a tile (reads the mask for inpainting).
ForwardOperator tile_operator(const ExperimentConfig& config, const DatasetManifest& manifest,
                              const TileRecord& tile, const std::filesystem::path& dir);

struct TrainSummary {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
};

/// Trains on the train split. Throws NumericError naming the first
/// non-finite loss term.
TrainSummary train(const ExperimentConfig& config, std::ostream* progress = nullptr);

struct EvalRow {
  std::string id;
  MetricReport metrics;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  MetricReport mean;
};

/// Model configuration for a dataset (channels come from the manifest).
ReconNetConfig model_config(const ExperimentConfig& config, const DatasetManifest& manifest);

/// Evaluates a checkpoint on the test split; an empty path evaluates the
/// zero-weight network, i.e. the linear baseline of the task.
EvalSummary evaluate(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// Writes a PNG grid: one row per transform kind (identity first, then
/// samples) and a final row sweeping theta_y.
void preview_transforms(const GroupSpec& spec, const ImageD& image, const std::filesystem::path& out,
                        std::uint64_t seed, int samples = 4);

/// Aggregates eval/metrics.csv mean rows of several runs into
/// <out_prefix>.csv and <out_prefix>.md, sorted by QNR descending.
void report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_prefix);

/// Formats a metric cell: empty when missing, "inf" for infinities.
std::string format_metric(const std::optional<double>& v);

}  // namespace pei
