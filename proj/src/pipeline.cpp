#include "pei/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"
#include "pei/checkpoint.hpp"
#include "pei/image_io.hpp"
#include "pei/losses.hpp"
#include "pei/optim.hpp"
#include "pei/synth.hpp"
#include "pei/warp.hpp"

namespace pei {

using nlohmann::json;
namespace fs = std::filesystem;

std::mt19937_64 stream_rng(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

std::vector<const TileRecord*> DatasetManifest::split(std::string_view name) const {
  std::vector<const TileRecord*> out;
  for (const auto& t : tiles) {
    if (t.split == name) out.push_back(&t);
  }
  return out;
}

void DatasetManifest::save(const fs::path& path) const {
  json j;
  j["task"] = std::string(to_string(task));
  j["channels"] = channels;
  j["height"] = height;
  j["width"] = width;
  j["factor"] = factor;
  j["tiles"] = json::array();
  for (const auto& t : tiles) {
    j["tiles"].push_back({{"id", t.id},
                          {"split", t.split},
                          {"measurements", t.measurements},
                          {"mask", t.mask},
                          {"reference", t.reference}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("missing dataset manifest " + path.string() + " (run simulate first)");
  DatasetManifest m;
  try {
    const json j = json::parse(f);
    m.task = task_from_string(j.at("task").get<std::string>());
    m.channels = j.at("channels").get<int>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.factor = j.at("factor").get<int>();
    for (const auto& t : j.at("tiles")) {
      m.tiles.push_back({t.at("id").get<std::string>(), t.at("split").get<std::string>(),
                         t.at("measurements").get<std::vector<std::string>>(), t.at("mask").get<std::string>(),
                         t.at("reference").get<std::string>()});
    }
  } catch (const std::exception& e) {
    throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

fs::path data_dir(const ExperimentConfig& config) { return config.output_dir / "data"; }

namespace {

struct SourceTile {
  std::string id;
  ImageD image;
};

std::vector<SourceTile> gather_sources(const ExperimentConfig& config) {
  std::vector<SourceTile> out;
  const int n = config.dataset.tile_size;
  if (config.dataset.source_dir.empty()) {
    SynthOptions opts = config.dataset.synthetic;
    opts.size = n;
    for (int k = 0; k < config.dataset.synthetic_count; ++k) {
      char id[32];
      std::snprintf(id, sizeof id, "scene_%03d", k);
      auto rng = stream_rng(config.seed, std::string("scene/") + id);
      out.push_back({id, synth_urban_scene(opts, rng)});
    }
    return out;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(config.dataset.source_dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (e.is_regular_file() && (ext == ".png" || ext == ".tif" || ext == ".tiff")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  int channels = -1;
  for (const auto& f : files) {
    ImageD img;
    try {
      img = read_image(f);
    } catch (const std::exception& e) {
      throw ConfigError("unreadable source image " + f.string() + ": " + e.what());
    }
    if (img.height() < n || img.width() < n) {
      throw ConfigError("source image " + f.string() + " is smaller than the tile size");
    }
    if (channels < 0) channels = img.channels();
    if (img.channels() != channels) throw ConfigError("source images disagree on the channel count");
    for (int r = 0; r + n <= img.height(); r += n) {
      for (int c = 0; c + n <= img.width(); c += n) {
        ImageD tile(img.channels(), n, n);
        for (int ch = 0; ch < img.channels(); ++ch) {
          for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) tile(ch, y, x) = img(ch, r + y, c + x);
          }
        }
        out.push_back({f.stem().string() + "_r" + std::to_string(r / n) + "_c" + std::to_string(c / n), tile});
      }
    }
  }
  if (out.size() < 2) throw ConfigError("source_dir yields fewer than two tiles");
  return out;
}

PansharpeningOperator pansharpening_operator(const ExperimentConfig& config, int channels) {
  const double sigma = config.op.mtf_sigma > 0.0 ? config.op.mtf_sigma : static_cast<double>(config.op.factor);
  std::vector<double> srf = config.op.srf.empty() ? flat_srf(channels) : config.op.srf;
  if (static_cast<int>(srf.size()) != channels) throw ConfigError("operator.srf length must equal the channel count");
  return make_pansharpening(channels, config.op.factor, sigma, srf);
}

}  // namespace

ReconNetConfig model_config(const ExperimentConfig& config, const DatasetManifest& manifest) {
  ReconNetConfig m = config.model;
  m.task = manifest.task;
  m.channels = manifest.channels;
  m.factor = manifest.factor;
  return m;
}

DatasetManifest simulate(const ExperimentConfig& config) {
  config.validate();
  const auto sources = gather_sources(config);
  const fs::path dir = data_dir(config);
  fs::create_directories(dir);

  DatasetManifest manifest;
  manifest.task = config.task;
  manifest.channels = sources.front().image.channels();
  manifest.height = manifest.width = config.dataset.tile_size;
  manifest.factor = config.task == Task::pansharpening ? config.op.factor : 1;

  // Deterministic split, independent of the per-tile streams.
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  auto split_rng = stream_rng(config.seed, "split");
  std::shuffle(order.begin(), order.end(), split_rng);
  const std::size_t n = sources.size();
  const std::size_t n_test =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.dataset.test_fraction * n)), 1, n - 1);
  std::vector<bool> is_test(n, false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

  std::optional<PansharpeningOperator> ps;
  if (config.task == Task::pansharpening) ps = pansharpening_operator(config, manifest.channels);

  for (std::size_t k = 0; k < n; ++k) {
    const auto& src = sources[k];
    auto rng = stream_rng(config.seed, "tile/" + src.id);
    TileRecord rec;
    rec.id = src.id;
    rec.split = is_test[k] ? "test" : "train";
    const fs::path tile_dir = dir / src.id;
    fs::create_directories(tile_dir);

    Measurement<double> y;
    if (config.task == Task::inpainting) {
      const auto op = random_mask(config.op.mask_fraction, manifest.height, manifest.width, rng);
      // Masked pixels are never measured, so noise only touches kept ones.
      y.parts.push_back(inpaint_apply(op, apply_noise(config.noise, inpaint_apply(op, src.image), rng)));
      rec.mask = src.id + "/mask.png";
      write_png(dir / rec.mask, op.mask);
    } else {
      y = pansharpen_apply(*ps, src.image);
      for (auto& part : y.parts) part = apply_noise(config.noise, part, rng);
    }
    for (std::size_t p = 0; p < y.parts.size(); ++p) {
      rec.measurements.push_back(src.id + "/y" + std::to_string(p) + ".tif");
      write_tiff(dir / rec.measurements.back(), y.parts[p]);
    }
    if (config.dataset.keep_reference) {
      rec.reference = src.id + "/reference.tif";
      write_tiff(dir / rec.reference, src.image);
    }
    manifest.tiles.push_back(std::move(rec));
  }
  manifest.save(dir / "manifest.json");
  return manifest;
}

ForwardOperator tile_operator(const ExperimentConfig& config, const DatasetManifest& manifest,
                              const TileRecord& tile, const fs::path& dir) {
  if (manifest.task == Task::pansharpening) return pansharpening_operator(config, manifest.channels);
  const ImageD png = read_png(dir / tile.mask);
  InpaintingOperator op;
  op.mask = ImageD(1, png.height(), png.width());
  std::size_t masked = 0;
  for (int y = 0; y < png.height(); ++y) {
    for (int x = 0; x < png.width(); ++x) {
      op.mask(0, y, x) = png(0, y, x) > 0.5 ? 1.0 : 0.0;
      masked += png(0, y, x) > 0.5 ? 0 : 1;
    }
  }
  op.masked_fraction = static_cast<double>(masked) / static_cast<double>(op.mask.size());
  return op;
}

namespace {

// Training allocates and frees the same few-megabyte buffers every step;
// keeping them on the heap instead of fresh mmaps avoids page-fault churn.
void keep_large_buffers() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

template <typename T>
struct LoadedTile {
  std::string id;
  Measurement<T> y;
  std::optional<Image<T>> reference;
  std::optional<OperatorMaps<T>> maps;
  ForwardOperator op;
};

template <typename T>
std::vector<LoadedTile<T>> load_split(const ExperimentConfig& config, const DatasetManifest& manifest,
                                      std::string_view split) {
  const fs::path dir = data_dir(config);
  std::vector<LoadedTile<T>> out;
  for (const TileRecord* rec : manifest.split(split)) {
    LoadedTile<T> t;
    t.id = rec->id;
    for (const auto& m : rec->measurements) t.y.parts.push_back(read_tiff(dir / m).template cast<T>());
    if (!rec->reference.empty()) t.reference = read_tiff(dir / rec->reference).template cast<T>();
    t.op = tile_operator(config, manifest, *rec, dir);
    t.maps.emplace(t.op, manifest.channels, manifest.height, manifest.width);
    out.push_back(std::move(t));
  }
  return out;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_metric(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

TrainSummary train(const ExperimentConfig& config, std::ostream* progress) {
  config.validate();
  keep_large_buffers();
  const auto manifest = DatasetManifest::load(data_dir(config) / "manifest.json");
  if (manifest.task != config.task) throw ConfigError("manifest task does not match the config");
  auto tiles = load_split<float>(config, manifest, "train");
  if (tiles.empty()) throw ConfigError("train split is empty");
  if (config.loss.has(LossTerm::supervised)) {
    for (const auto& t : tiles) {
      if (!t.reference) throw ConfigError("supervised loss needs references (dataset.keep_reference)");
    }
  }

  ReconNet<float> model(model_config(config, manifest));
  auto init_rng = stream_rng(config.seed, "init");
  model.initialize(init_rng);
  ad::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.optimizer.learning_rate;
  adam_cfg.weight_decay = config.optimizer.weight_decay;
  ad::Adam<float> adam(adam_cfg, model.parameter_ptrs());
  auto rng = stream_rng(config.seed, "train");

  const fs::path ckpt_dir = config.output_dir / "checkpoints";
  TrainSummary summary;
  summary.final_checkpoint = ckpt_dir / "final.bin";
  summary.best_checkpoint = ckpt_dir / "best.bin";
  save_checkpoint(summary.best_checkpoint, to_named_arrays(model.parameters()));

  fs::create_directories(config.output_dir);
  std::ofstream log(config.output_dir / "train_log.csv");
  log << "epoch,lr,total";
  for (auto t : config.loss.terms) log << "," << to_string(t);
  log << "\n";

  std::vector<std::size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  const int batch = config.optimizer.batch_size;

  for (int epoch = 0; epoch < config.optimizer.epochs; ++epoch) {
    const double lr = ad::scheduled_learning_rate(config.optimizer.learning_rate, config.optimizer.decay, epoch,
                                                  config.optimizer.decay_every_epochs);
    adam.set_learning_rate(lr);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::vector<double> terms(config.loss.terms.size(), 0.0);

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      adam.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        auto& tile = tiles[order[k]];
        ad::Tape<float> tape;
        auto loss = training_loss(tape, model, *tile.maps, tile.y, tile.reference ? &*tile.reference : nullptr,
                                  config.noise, config.loss, rng);
        for (std::size_t i = 0; i < loss.terms.size(); ++i) {
          const double v = loss.terms[i].second.item();
          if (!std::isfinite(v)) {
            throw NumericError("non-finite " + std::string(to_string(loss.terms[i].first)) + " loss at epoch " +
                               std::to_string(epoch) + " on tile " + tile.id);
          }
          terms[i] += v;
        }
        const double v = loss.total.item();
        if (!std::isfinite(v)) throw NumericError("non-finite total loss at epoch " + std::to_string(epoch));
        total += v;
        tape.backward(ad::scale(loss.total, 1.0 / static_cast<double>(end - start)));
      }
      for (const auto& p : model.parameters()) {
        for (float g : p.grad) {
          if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name + " at epoch " + std::to_string(epoch));
        }
      }
      adam.step();
    }

    const double n = static_cast<double>(tiles.size());
    summary.epoch_loss.push_back(total / n);
    log << epoch << "," << fmt(lr) << "," << fmt(total / n);
    for (double t : terms) log << "," << fmt(t / n);
    log << "\n";
    if (total / n < best) {
      best = total / n;
      save_checkpoint(summary.best_checkpoint, to_named_arrays(model.parameters()));
    }
    if (progress) *progress << "epoch " << epoch << " loss " << fmt(total / n) << "\n";
  }
  save_checkpoint(summary.final_checkpoint, to_named_arrays(model.parameters()));
  return summary;
}

EvalSummary evaluate(const ExperimentConfig& config, const fs::path& checkpoint) {
  config.validate();
  const auto manifest = DatasetManifest::load(data_dir(config) / "manifest.json");
  auto tiles = load_split<double>(config, manifest, "test");
  if (tiles.empty()) throw ConfigError("test split is empty");

  ReconNet<float> model(model_config(config, manifest));
  if (!checkpoint.empty()) {
    std::vector<NamedArray> arrays;
    try {
      arrays = load_checkpoint(checkpoint);
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
    assign_named_arrays(arrays, model.parameters());
  }

  const auto names = config.metric_names();
  auto want = [&](const char* m) { return std::find(names.begin(), names.end(), m) != names.end(); };
  const fs::path eval_dir = config.output_dir / "eval";
  fs::create_directories(eval_dir);

  EvalSummary summary;
  for (const auto& t : tiles) {
    Measurement<float> yf;
    for (const auto& p : t.y.parts) yf.parts.push_back(p.cast<float>());
    const ImageD x_hat = model.reconstruct(yf).cast<double>();
    EvalRow row;
    row.id = t.id;
    if (t.reference) {
      if (want("psnr")) row.metrics.psnr = psnr(x_hat, *t.reference);
      if (want("ssim")) row.metrics.ssim = ssim_mean(x_hat, *t.reference);
      if (want("ergas")) row.metrics.ergas = ergas(x_hat, *t.reference, manifest.factor);
    }
    if (want("qnr") && manifest.task == Task::pansharpening) {
      const auto q = qnr(x_hat, t.y.parts[0], t.y.parts[1], std::get<PansharpeningOperator>(t.op));
      row.metrics.qnr = q.qnr;
      row.metrics.d_lambda = q.d_lambda;
      row.metrics.d_s = q.d_s;
    }
    if (config.eval.write_images) write_png(eval_dir / "recon" / (t.id + ".png"), x_hat);
    summary.rows.push_back(std::move(row));
  }

  auto mean_of = [&](std::optional<double> MetricReport::*field) -> std::optional<double> {
    double s = 0.0;
    for (const auto& r : summary.rows) {
      if (!(r.metrics.*field)) return std::nullopt;
      s += *(r.metrics.*field);
    }
    return s / static_cast<double>(summary.rows.size());
  };
  summary.mean.psnr = mean_of(&MetricReport::psnr);
  summary.mean.ssim = mean_of(&MetricReport::ssim);
  summary.mean.ergas = mean_of(&MetricReport::ergas);
  summary.mean.qnr = mean_of(&MetricReport::qnr);
  summary.mean.d_lambda = mean_of(&MetricReport::d_lambda);
  summary.mean.d_s = mean_of(&MetricReport::d_s);

  std::ofstream csv(eval_dir / "metrics.csv");
  csv << "image_id,psnr,ssim,ergas,qnr,d_lambda,d_s\n";
  auto write_row = [&](const std::string& id, const MetricReport& m) {
    csv << id << "," << format_metric(m.psnr) << "," << format_metric(m.ssim) << "," << format_metric(m.ergas) << ","
        << format_metric(m.qnr) << "," << format_metric(m.d_lambda) << "," << format_metric(m.d_s) << "\n";
  };
  for (const auto& r : summary.rows) write_row(r.id, r.metrics);
  write_row("mean", summary.mean);
  return summary;
}

void preview_transforms(const GroupSpec& base, const ImageD& image, const fs::path& out, std::uint64_t seed,
                        int samples) {
  const int h = image.height();
  const int w = image.width();
  const int gap = 2;
  const std::vector<TransformKind> kinds = {TransformKind::shift,      TransformKind::rotation, TransformKind::scale,
                                            TransformKind::similarity, TransformKind::affine,   TransformKind::pan_tilt,
                                            TransformKind::perspective};
  const int cols = samples + 1;
  const int rows = static_cast<int>(kinds.size()) + 1;
  ImageD grid(image.channels(), rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, 1.0);
  auto place = [&](const ImageD& tile, int r, int c) {
    for (int ch = 0; ch < image.channels(); ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) grid(ch, r * (h + gap) + y, c * (w + gap) + x) = tile(ch, y, x);
      }
    }
  };

  for (std::size_t r = 0; r < kinds.size(); ++r) {
    GroupSpec spec = base;
    spec.kind = kinds[r];
    spec.height = h;
    spec.width = w;
    auto rng = stream_rng(seed, std::string("preview/") + std::string(to_string(spec.kind)));
    place(image, static_cast<int>(r), 0);
    for (int c = 1; c < cols; ++c) {
      place(WarpTable(sample_transform(spec, rng), h, w).apply(image), static_cast<int>(r), c);
    }
  }
  // theta_y sweep over the full pan/tilt range, identity first.
  GroupSpec spec = base;
  spec.height = h;
  spec.width = w;
  const CameraIntrinsics k = base_intrinsics(spec);
  const double max_rad = spec.bounds.pan_tilt_deg * std::acos(-1.0) / 180.0;
  for (int c = 0; c < cols; ++c) {
    const double theta = samples == 0 ? 0.0 : max_rad * c / samples;
    const auto hmg = camera_rotation_homography(k, EulerAngles{0.0, theta, 0.0});
    place(WarpTable(hmg, h, w).apply(image), rows - 1, c);
  }
  write_png(out, grid);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  for (char ch : line) {
    if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  return out;
}

}  // namespace

void report(const std::vector<fs::path>& run_dirs, const fs::path& out_prefix) {
  static const std::vector<std::string> kColumns = {"psnr", "ssim", "ergas", "qnr", "d_lambda", "d_s"};
  struct Row {
    std::string run;
    std::vector<std::string> cells;
    std::optional<double> qnr;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    const fs::path csv = dir / "eval" / "metrics.csv";
    std::ifstream f(csv);
    if (!f) throw ConfigError("missing " + csv.string());
    std::string line;
    std::getline(f, line);
    const auto header = split_csv(line);
    std::vector<int> index;
    for (const auto& col : kColumns) {
      const auto it = std::find(header.begin(), header.end(), col);
      if (it == header.end()) throw ConfigError(csv.string() + " lacks column " + col);
      index.push_back(static_cast<int>(it - header.begin()));
    }
    std::optional<std::vector<std::string>> mean;
    while (std::getline(f, line)) {
      auto cells = split_csv(line);
      if (!cells.empty() && cells[0] == "mean") mean = cells;
    }
    if (!mean) throw ConfigError(csv.string() + " has no mean row");
    Row row;
    row.run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    for (int i : index) row.cells.push_back(i < static_cast<int>(mean->size()) ? (*mean)[i] : "");
    if (!row.cells[3].empty()) row.qnr = std::stod(row.cells[3]);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.qnr && b.qnr) return *a.qnr > *b.qnr;
    return a.qnr.has_value() && !b.qnr.has_value();
  });

  if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
  std::ofstream csv(out_prefix.string() + ".csv");
  std::ofstream md(out_prefix.string() + ".md");
  csv << "run";
  md << "| run |";
  for (const auto& c : kColumns) {
    csv << "," << c;
    md << " " << c << " |";
  }
  csv << "\n";
  md << "\n|---|";
  for (std::size_t i = 0; i < kColumns.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& r : rows) {
    csv << r.run;
    md << "| " << r.run << " |";
    for (const auto& c : r.cells) {
      csv << "," << c;
      md << " " << c << " |";
    }
    csv << "\n";
    md << "\n";
  }
}

}  // namespace pei
