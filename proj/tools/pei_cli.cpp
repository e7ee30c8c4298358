// Command-line front end: simulate, train, evaluate, preview-transforms,
// report, validate.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure, 1 other.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "pei/config.hpp"
#include "pei/errors.hpp"
#include "pei/image_io.hpp"
#include "pei/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "Override the global seed");
  cmd->add_option("--out", c.out, "Override the output directory");
}

pei::ExperimentConfig resolve(const Common& c) {
  pei::ExperimentConfig cfg = c.config.empty() ? pei::ExperimentConfig{} : pei::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

void print_report(const pei::MetricReport& m) {
  std::cout << "psnr=" << pei::format_metric(m.psnr) << " ssim=" << pei::format_metric(m.ssim)
            << " ergas=" << pei::format_metric(m.ergas) << " qnr=" << pei::format_metric(m.qnr)
            << " d_lambda=" << pei::format_metric(m.d_lambda) << " d_s=" << pei::format_metric(m.d_s) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perspective-equivariant imaging experiments"};
  app.require_subcommand(1);

  Common common;
  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
  add_common(validate, common);
  auto* simulate = app.add_subcommand("simulate", "Build the measurement dataset");
  add_common(simulate, common);
  auto* train = app.add_subcommand("train", "Train a reconstruction network");
  add_common(train, common);
  bool verbose = false;
  train->add_flag("-v,--verbose", verbose, "Print per-epoch losses");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  add_common(evaluate, common);
  std::string checkpoint;
  evaluate->add_option("--checkpoint", checkpoint,
                       "Checkpoint file (default <out>/checkpoints/final.bin; 'baseline' for zero weights)");

  auto* preview = app.add_subcommand("preview-transforms", "Render a grid of sampled transforms");
  add_common(preview, common, false);
  std::string image;
  preview->add_option("--image", image, "Input image (PNG or TIFF)")->required();

  auto* report = app.add_subcommand("report", "Aggregate mean metrics of several runs");
  std::vector<std::string> runs;
  std::string report_out = "report";
  report->add_option("runs", runs, "Run directories")->required();
  report->add_option("--out", report_out, "Output prefix (writes .csv and .md)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*validate) {
      auto cfg = resolve(common);
      cfg.validate();
      std::cout << pei::dump_config(cfg) << "\n";
    } else if (*simulate) {
      const auto manifest = pei::simulate(resolve(common));
      std::cout << "simulated " << manifest.tiles.size() << " tiles (" << manifest.split("train").size()
                << " train, " << manifest.split("test").size() << " test)\n";
    } else if (*train) {
      const auto summary = pei::train(resolve(common), verbose ? &std::cout : nullptr);
      std::cout << "trained " << summary.epoch_loss.size() << " epochs";
      if (!summary.epoch_loss.empty()) std::cout << ", final loss " << summary.epoch_loss.back();
      std::cout << "\ncheckpoint " << summary.final_checkpoint.string() << "\n";
    } else if (*evaluate) {
      const auto cfg = resolve(common);
      std::filesystem::path ckpt = checkpoint;
      if (checkpoint.empty()) ckpt = cfg.output_dir / "checkpoints" / "final.bin";
      if (checkpoint == "baseline") ckpt.clear();
      const auto summary = pei::evaluate(cfg, ckpt);
      print_report(summary.mean);
    } else if (*preview) {
      const auto cfg = resolve(common);
      const auto img = pei::read_image(image);
      std::filesystem::path out = common.out.empty() ? "preview.png" : common.out;
      pei::preview_transforms(cfg.loss.group, img, out, cfg.seed);
      std::cout << "wrote " << out.string() << "\n";
    } else if (*report) {
      std::vector<std::filesystem::path> dirs(runs.begin(), runs.end());
      pei::report(dirs, report_out);
      std::cout << "wrote " << report_out << ".csv and " << report_out << ".md\n";
    }
  } catch (const pei::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pei::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
