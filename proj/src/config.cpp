#include "pei/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pei {

using nlohmann::json;

namespace {

// Wraps one JSON object, remembers which keys were read, and reports the
// leftovers as errors.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown key " + path_ + "." + key);
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename V>
  void get(const std::string& key, V& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  Section sub(const std::string& key) {
    used_.insert(key);
    static const json kEmpty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : kEmpty, path_ + "." + key);
  }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + " " + what); }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

NoiseModel::Kind noise_kind(const std::string& s) {
  if (s == "none") return NoiseModel::Kind::none;
  if (s == "gaussian") return NoiseModel::Kind::gaussian;
  if (s == "poisson") return NoiseModel::Kind::poisson;
  throw ConfigError("unknown noise kind: " + s);
}

std::string noise_kind_name(NoiseModel::Kind k) {
  switch (k) {
    case NoiseModel::Kind::none: return "none";
    case NoiseModel::Kind::gaussian: return "gaussian";
    case NoiseModel::Kind::poisson: return "poisson";
  }
  return "none";
}

std::string join_terms(const std::vector<LossTerm>& terms) {
  std::string out;
  for (auto t : terms) {
    if (!out.empty()) out += "+";
    out += to_string(t);
  }
  return out;
}

const std::vector<std::string> kKnownMetrics = {"psnr", "ssim", "ergas", "qnr"};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    Section top(root, "config");
    std::string task = "inpainting";
    top.get("task", task);
    try {
      c.task = task_from_string(task);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    top.get("seed", c.seed);
    std::string out = c.output_dir.string();
    top.get("output_dir", out);
    c.output_dir = out;

    {
      auto d = top.sub("dataset");
      std::string src;
      d.get("source_dir", src);
      c.dataset.source_dir = src;
      {
        auto s = d.sub("synthetic");
        s.get("count", c.dataset.synthetic_count);
        s.get("channels", c.dataset.synthetic.channels);
        s.get("supersample", c.dataset.synthetic.supersample);
        s.get("max_tilt_deg", c.dataset.synthetic.max_tilt_deg);
      }
      d.get("tile_size", c.dataset.tile_size);
      d.get("test_fraction", c.dataset.test_fraction);
      d.get("keep_reference", c.dataset.keep_reference);
    }
    {
      auto o = top.sub("operator");
      o.get("mask_fraction", c.op.mask_fraction);
      o.get("factor", c.op.factor);
      o.get("mtf_sigma", c.op.mtf_sigma);
      o.get("srf", c.op.srf);
    }
    {
      auto n = top.sub("noise");
      std::string kind = "none";
      n.get("kind", kind);
      c.noise.kind = noise_kind(kind);
      n.get("sigma", c.noise.sigma);
      n.get("gain", c.noise.gain);
    }
    {
      auto m = top.sub("model");
      m.get("hidden", c.model.hidden);
      m.get("blocks", c.model.blocks);
      m.get("kernel_size", c.model.kernel_size);
      m.get("highpass_kernel", c.model.highpass_kernel);
      std::string pad = "reflect";
      m.get("padding", pad);
      if (pad != "reflect" && pad != "zero") throw ConfigError("model.padding must be reflect or zero");
      c.model.padding = pad == "zero" ? ad::Padding::zero : ad::Padding::reflect;
    }
    {
      auto l = top.sub("loss");
      std::string terms = "mc";
      l.get("terms", terms);
      c.loss.terms = parse_loss_terms(terms);
      {
        auto w = l.sub("weights");
        for (std::size_t i = 0; i < kLossTermCount; ++i) {
          w.get(std::string(to_string(static_cast<LossTerm>(i))), c.loss.weights[i]);
        }
      }
      std::string tv = "anisotropic";
      l.get("tv_flavor", tv);
      if (tv != "anisotropic" && tv != "isotropic") throw ConfigError("loss.tv_flavor must be anisotropic or isotropic");
      c.loss.tv_flavor = tv == "isotropic" ? TvFlavor::isotropic : TvFlavor::anisotropic;
      l.get("sure_probes", c.loss.sure.probes);
      l.get("sure_tau", c.loss.sure.tau);
      {
        auto g = l.sub("group");
        std::string kind(to_string(c.loss.group.kind));
        g.get("kind", kind);
        try {
          c.loss.group.kind = transform_kind_from_string(kind);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
        g.get("alpha", c.loss.group.range_fraction);
        g.get("focal", c.loss.group.focal);
        auto b = g.sub("bounds");
        auto& tb = c.loss.group.bounds;
        b.get("shift_fraction", tb.shift_fraction);
        b.get("rotation_deg", tb.rotation_deg);
        b.get("min_scale_ratio", tb.min_scale_ratio);
        b.get("skew_fraction", tb.skew_fraction);
        b.get("min_stretch_ratio", tb.min_stretch_ratio);
        b.get("pan_tilt_deg", tb.pan_tilt_deg);
      }
    }
    {
      auto o = top.sub("optimizer");
      o.get("lr", c.optimizer.learning_rate);
      o.get("decay", c.optimizer.decay);
      o.get("decay_every_epochs", c.optimizer.decay_every_epochs);
      o.get("epochs", c.optimizer.epochs);
      o.get("batch_size", c.optimizer.batch_size);
      o.get("weight_decay", c.optimizer.weight_decay);
    }
    {
      auto e = top.sub("eval");
      e.get("metrics", c.eval.metrics);
      e.get("write_images", c.eval.write_images);
    }
  }

  if (!c.dataset.source_dir.empty() && c.dataset.source_dir.is_relative() && !base_dir.empty()) {
    c.dataset.source_dir = base_dir / c.dataset.source_dir;
  }
  if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
  c.dataset.synthetic.size = c.dataset.tile_size;
  c.model.task = c.task;
  c.model.factor = c.op.factor;
  c.model.channels = c.dataset.synthetic.channels;
  c.loss.group.height = c.loss.group.width = c.dataset.tile_size;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void ExperimentConfig::validate() const {
  if (dataset.tile_size < 8) throw ConfigError("dataset.tile_size must be >= 8");
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  }
  if (dataset.source_dir.empty()) {
    if (dataset.synthetic_count < 2) throw ConfigError("dataset.synthetic.count must be >= 2");
    if (dataset.synthetic.channels < 1) throw ConfigError("dataset.synthetic.channels must be >= 1");
    if (dataset.synthetic.supersample < 1) throw ConfigError("dataset.synthetic.supersample must be >= 1");
  } else if (!std::filesystem::is_directory(dataset.source_dir)) {
    throw ConfigError("dataset.source_dir does not exist: " + dataset.source_dir.string());
  }
  if (task == Task::inpainting) {
    if (!(op.mask_fraction >= 0.0 && op.mask_fraction < 1.0)) {
      throw ConfigError("operator.mask_fraction must lie in [0, 1)");
    }
  } else {
    if (op.factor < 1) throw ConfigError("operator.factor must be >= 1");
    if (dataset.tile_size % op.factor != 0) throw ConfigError("dataset.tile_size must be divisible by operator.factor");
    if (!op.srf.empty()) {
      double s = 0.0;
      for (double w : op.srf) {
        if (w < 0.0) throw ConfigError("operator.srf weights must be nonnegative");
        s += w;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ConfigError("operator.srf weights must sum to 1");
      if (dataset.source_dir.empty() && static_cast<int>(op.srf.size()) != dataset.synthetic.channels) {
        throw ConfigError("operator.srf length must equal the channel count");
      }
    }
    if (loss.has(LossTerm::wald) && dataset.tile_size % (op.factor * op.factor) != 0) {
      throw ConfigError("wald loss needs tile_size divisible by factor^2");
    }
  }
  if (noise.sigma < 0.0 || noise.gain < 0.0) throw ConfigError("noise parameters must be nonnegative");
  try {
    ReconNetConfig m = model;
    m.channels = std::max(1, m.channels);
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  loss.validate(task);
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (!(optimizer.decay > 0.0 && optimizer.decay <= 1.0)) throw ConfigError("optimizer.decay must lie in (0, 1]");
  if (optimizer.decay_every_epochs < 1) throw ConfigError("optimizer.decay_every_epochs must be >= 1");
  if (optimizer.epochs < 0) throw ConfigError("optimizer.epochs must be >= 0");
  if (optimizer.batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
  if (optimizer.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be >= 0");
  for (const auto& m : eval.metrics) {
    if (std::find(kKnownMetrics.begin(), kKnownMetrics.end(), m) == kKnownMetrics.end()) {
      throw ConfigError("unknown metric: " + m);
    }
    if (m == "qnr" && task != Task::pansharpening) throw ConfigError("qnr needs the pansharpening task");
  }
}

std::vector<std::string> ExperimentConfig::metric_names() const {
  if (!eval.metrics.empty()) return eval.metrics;
  if (task == Task::pansharpening) return {"psnr", "ssim", "ergas", "qnr"};
  return {"psnr", "ssim"};
}

std::string dump_config(const ExperimentConfig& c) {
  json j;
  j["task"] = std::string(to_string(c.task));
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.string();
  j["dataset"] = {
      {"source_dir", c.dataset.source_dir.string()},
      {"synthetic",
       {{"count", c.dataset.synthetic_count},
        {"channels", c.dataset.synthetic.channels},
        {"supersample", c.dataset.synthetic.supersample},
        {"max_tilt_deg", c.dataset.synthetic.max_tilt_deg}}},
      {"tile_size", c.dataset.tile_size},
      {"test_fraction", c.dataset.test_fraction},
      {"keep_reference", c.dataset.keep_reference},
  };
  j["operator"] = {{"mask_fraction", c.op.mask_fraction},
                   {"factor", c.op.factor},
                   {"mtf_sigma", c.op.mtf_sigma},
                   {"srf", c.op.srf}};
  j["noise"] = {{"kind", noise_kind_name(c.noise.kind)}, {"sigma", c.noise.sigma}, {"gain", c.noise.gain}};
  j["model"] = {{"hidden", c.model.hidden},
                {"blocks", c.model.blocks},
                {"kernel_size", c.model.kernel_size},
                {"highpass_kernel", c.model.highpass_kernel},
                {"padding", c.model.padding == ad::Padding::zero ? "zero" : "reflect"}};
  json weights;
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    weights[std::string(to_string(static_cast<LossTerm>(i)))] = c.loss.weights[i];
  }
  const auto& b = c.loss.group.bounds;
  j["loss"] = {
      {"terms", join_terms(c.loss.terms)},
      {"weights", weights},
      {"tv_flavor", c.loss.tv_flavor == TvFlavor::isotropic ? "isotropic" : "anisotropic"},
      {"sure_probes", c.loss.sure.probes},
      {"sure_tau", c.loss.sure.tau},
      {"group",
       {{"kind", std::string(to_string(c.loss.group.kind))},
        {"alpha", c.loss.group.range_fraction},
        {"focal", c.loss.group.focal},
        {"bounds",
         {{"shift_fraction", b.shift_fraction},
          {"rotation_deg", b.rotation_deg},
          {"min_scale_ratio", b.min_scale_ratio},
          {"skew_fraction", b.skew_fraction},
          {"min_stretch_ratio", b.min_stretch_ratio},
          {"pan_tilt_deg", b.pan_tilt_deg}}}}},
  };
  j["optimizer"] = {{"lr", c.optimizer.learning_rate},
                    {"decay", c.optimizer.decay},
                    {"decay_every_epochs", c.optimizer.decay_every_epochs},
                    {"epochs", c.optimizer.epochs},
                    {"batch_size", c.optimizer.batch_size},
                    {"weight_decay", c.optimizer.weight_decay}};
  j["eval"] = {{"metrics", c.eval.metrics}, {"write_images", c.eval.write_images}};
  return j.dump(2);
}

}  // namespace pei
