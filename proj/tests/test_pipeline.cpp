#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "pei/checkpoint.hpp"
#include "pei/errors.hpp"
#include "pei/image_io.hpp"
#include "pei/pipeline.hpp"
#include "pipeline_checks.hpp"

using namespace pei;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pei_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_inpainting() {
  auto c = parse_config(R"({"task": "inpainting", "seed": 11,
      "dataset": {"tile_size": 16, "synthetic": {"count": 5, "channels": 3, "supersample": 1}},
      "model": {"hidden": 4, "blocks": 1},
      "loss": {"terms": "mc+ei", "group": {"kind": "pan_tilt", "alpha": 0.5}},
      "optimizer": {"epochs": 2}})");
  return c;
}

ExperimentConfig small_pansharpening() {
  return parse_config(R"({"task": "pansharpening", "seed": 12,
      "dataset": {"tile_size": 16, "synthetic": {"count": 4, "channels": 4, "supersample": 1}},
      "operator": {"factor": 2},
      "model": {"hidden": 4, "blocks": 1, "highpass_kernel": 3},
      "loss": {"terms": "mc+tv+ei"},
      "optimizer": {"epochs": 1}})");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PEI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("RNG streams are independent of each other") {
  auto a = stream_rng(1, "tile/x");
  auto b = stream_rng(1, "tile/x");
  auto c = stream_rng(1, "tile/y");
  auto d = stream_rng(2, "tile/x");
  const auto va = a();
  CHECK(va == b());
  CHECK(va != c());
  CHECK(va != d());
}

TEST_CASE("simulate writes the dataset") {
  auto cfg = small_inpainting();
  cfg.output_dir = scratch("simulate");
  const auto m = simulate(cfg);
  CHECK(m.tiles.size() == 5);
  CHECK(m.split("test").size() == 1);
  CHECK(m.split("train").size() == 4);
  CHECK(m.channels == 3);
  CHECK(m.height == 16);

  const auto dir = data_dir(cfg);
  const auto loaded = DatasetManifest::load(dir / "manifest.json");
  REQUIRE(loaded.tiles.size() == m.tiles.size());
  for (const auto& t : loaded.tiles) {
    REQUIRE(t.measurements.size() == 1);
    const ImageD y = read_image(dir / t.measurements[0]);
    CHECK(y.channels() == 3);
    const ImageD mask = read_image(dir / t.mask);
    const ImageD ref = read_image(dir / t.reference);
    // Masked pixels are exactly zero; kept pixels carry the clean value.
    for (int r = 0; r < 16; ++r) {
      for (int col = 0; col < 16; ++col) {
        for (int ch = 0; ch < 3; ++ch) {
          if (mask(0, r, col) == 0.0) {
            CHECK(y(ch, r, col) == 0.0);
          } else {
            CHECK(y(ch, r, col) == doctest::Approx(ref(ch, r, col)).epsilon(1e-6));
          }
        }
      }
    }
    const auto op = std::get<InpaintingOperator>(tile_operator(cfg, loaded, t, dir));
    CHECK(op.mask.height() == 16);
  }

  auto ps = small_pansharpening();
  ps.output_dir = scratch("simulate_ps");
  const auto pm = simulate(ps);
  const auto& t = pm.tiles.front();
  REQUIRE(t.measurements.size() == 2);
  const ImageD ms = read_image(data_dir(ps) / t.measurements[0]);
  const ImageD pan = read_image(data_dir(ps) / t.measurements[1]);
  CHECK(ms.channels() == 4);
  CHECK(ms.height() == 8);
  CHECK(pan.channels() == 1);
  CHECK(pan.height() == 16);
  CHECK(t.mask.empty());
}

TEST_CASE("the pipeline is byte-reproducible") {
  const auto root = scratch("determinism");
  const auto bad = test::determinism_mismatches(small_inpainting(), root / "a", root / "b");
  for (const auto& f : bad) CAPTURE(f);
  CHECK(bad.empty());

  // A different seed changes the data.
  auto other = small_inpainting();
  other.seed = 99;
  other.output_dir = root / "c";
  simulate(other);
  CHECK(test::read_bytes(root / "a" / "data" / "manifest.json") != test::read_bytes(root / "c" / "data" / "manifest.json"));
}

TEST_CASE("training and evaluation outputs") {
  auto cfg = small_pansharpening();
  const auto dir = scratch("train");
  const auto eval = test::run_pipeline(cfg, dir);
  cfg.output_dir = dir;
  REQUIRE(eval.rows.size() == 1);
  CHECK(eval.mean.qnr.has_value());
  CHECK(eval.mean.ergas.has_value());
  CHECK(fs::exists(dir / "eval" / "recon" / (eval.rows[0].id + ".png")));

  std::ifstream log(dir / "train_log.csv");
  std::string header, line;
  std::getline(log, header);
  CHECK(header.find("mc") != std::string::npos);
  CHECK(header.find("tv") != std::string::npos);
  int epochs = 0;
  while (std::getline(log, line)) ++epochs;
  CHECK(epochs == 1);

  std::ifstream csv(dir / "eval" / "metrics.csv");
  std::getline(csv, header);
  CHECK(header == "image_id,psnr,ssim,ergas,qnr,d_lambda,d_s");

  // The baseline is the zero-weight network.
  const auto base = evaluate(cfg, {});
  CHECK(base.mean.psnr.has_value());
  CHECK(*base.mean.psnr != *eval.mean.psnr);
}

TEST_CASE("zero epochs store the initialization") {
  auto cfg = small_inpainting();
  cfg.optimizer.epochs = 0;
  cfg.output_dir = scratch("zero_epochs");
  const auto manifest = simulate(cfg);
  const auto summary = train(cfg);
  CHECK(summary.epoch_loss.empty());

  ReconNet<float> model(model_config(cfg, manifest));
  auto rng = stream_rng(cfg.seed, "init");
  model.initialize(rng);
  CHECK(load_checkpoint(summary.final_checkpoint) == to_named_arrays(model.parameters()));
  CHECK(load_checkpoint(summary.best_checkpoint) == to_named_arrays(model.parameters()));
}

TEST_CASE("non-finite data stops training") {
  const auto src = scratch("nan_source");
  ImageD img(3, 16, 16, 0.5);
  img(1, 3, 3) = std::numeric_limits<double>::quiet_NaN();
  write_tiff(src / "a.tif", img);
  write_tiff(src / "b.tif", img);
  auto cfg = small_inpainting();
  cfg.dataset.source_dir = src;
  cfg.dataset.test_fraction = 0.5;
  cfg.output_dir = scratch("nan_run");
  cfg.op.mask_fraction = 0.0;
  simulate(cfg);
  CHECK_THROWS_AS(train(cfg), NumericError);
}

TEST_CASE("metric cells") {
  CHECK(format_metric(std::nullopt).empty());
  CHECK(format_metric(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_metric(1.5) == "1.500000");
}

TEST_CASE("report sorts by QNR") {
  const auto root = scratch("report");
  auto write = [&](const std::string& run, const std::string& mean) {
    fs::create_directories(root / run / "eval");
    std::ofstream f(root / run / "eval" / "metrics.csv");
    f << "image_id,psnr,ssim,ergas,qnr,d_lambda,d_s\n"
      << "t0,1,1,1,1,1,1\n"
      << "mean," << mean << "\n";
  };
  write("low", "30.000000,0.900000,2.000000,0.700000,0.100000,0.200000");
  write("high", "29.000000,0.800000,3.000000,0.850000,0.050000,0.100000");
  write("inpaint", "25.000000,0.700000,,,,");
  report({root / "inpaint", root / "low", root / "high"}, root / "summary");
  std::ifstream csv(root / "summary.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "run,psnr,ssim,ergas,qnr,d_lambda,d_s");
  CHECK(lines[1].rfind("high,", 0) == 0);
  CHECK(lines[2].rfind("low,", 0) == 0);
  CHECK(lines[3] == "inpaint,25.000000,0.700000,,,,");
  CHECK(fs::exists(root / "summary.md"));
  CHECK_THROWS_AS(report({root / "missing"}, root / "x"), ConfigError);
}

TEST_CASE("transform previews are deterministic") {
  const auto root = scratch("preview");
  std::mt19937_64 rng(3);
  ImageD img(3, 24, 24);
  for (auto& v : img.data()) v = std::uniform_real_distribution<double>(0, 1)(rng);
  GroupSpec spec;
  spec.height = spec.width = 24;
  spec.range_fraction = 1.0;
  preview_transforms(spec, img, root / "a.png", 5);
  preview_transforms(spec, img, root / "b.png", 5);
  const ImageD grid = read_png(root / "a.png");
  CHECK(grid.width() > 24);
  CHECK(grid.height() > 24);
  CHECK(test::read_bytes(root / "a.png") == test::read_bytes(root / "b.png"));
}

TEST_CASE("command-line exit codes") {
  const auto root = scratch("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("validate --config " + (root / "missing.json").string()) == 2);
  {
    std::ofstream(root / "bad.json") << R"({"optimizer": {"lr": -1}})";
  }
  CHECK(run_cli("validate --config " + (root / "bad.json").string()) == 2);
  {
    std::ofstream(root / "typo.json") << R"({"optimiser": {}})";
  }
  CHECK(run_cli("validate --config " + (root / "typo.json").string()) == 2);
  {
    std::ofstream(root / "ok.json") << R"({"task": "inpainting"})";
  }
  CHECK(run_cli("validate --config " + (root / "ok.json").string()) == 0);

  const auto src = root / "nan";
  fs::create_directories(src);
  ImageD img(3, 16, 16, 0.5);
  img(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  write_tiff(src / "a.tif", img);
  write_tiff(src / "b.tif", img);
  {
    std::ofstream(root / "nan.json") << R"({"dataset": {"source_dir": "nan", "tile_size": 16},
        "operator": {"mask_fraction": 0.0}, "model": {"hidden": 2, "blocks": 1},
        "optimizer": {"epochs": 1}, "output_dir": "nan_run"})";
  }
  const std::string nan_cfg = "--config " + (root / "nan.json").string();
  CHECK(run_cli("simulate " + nan_cfg) == 0);
  CHECK(run_cli("train " + nan_cfg) == 3);
}
