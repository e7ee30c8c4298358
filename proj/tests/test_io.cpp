#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "pei/config.hpp"
#include "pei/errors.hpp"
#include "pei/image_io.hpp"
#include "test_util.hpp"

using namespace pei;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pei_test_io";
  fs::create_directories(dir);
  return dir / name;
}

// Minimal big-endian 16-bit grayscale TIFF, one strip.
std::vector<std::uint8_t> big_endian_tiff(int w, int h, const std::vector<std::uint16_t>& px) {
  std::vector<std::uint8_t> b = {'M', 'M', 0, 42, 0, 0, 0, 8};
  auto u16 = [&](std::uint32_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
  };
  auto u32 = [&](std::uint32_t v) {
    u16(v >> 16);
    u16(v & 0xffff);
  };
  const std::uint32_t n_entries = 8;
  const std::uint32_t data_offset = 8 + 2 + n_entries * 12 + 4;
  auto short_entry = [&](std::uint32_t tag, std::uint32_t v) {
    u16(tag);
    u16(3);
    u32(1);
    u16(v);
    u16(0);
  };
  auto long_entry = [&](std::uint32_t tag, std::uint32_t v) {
    u16(tag);
    u16(4);
    u32(1);
    u32(v);
  };
  u16(n_entries);
  short_entry(256, w);
  short_entry(257, h);
  short_entry(258, 16);
  short_entry(259, 1);
  short_entry(262, 1);
  long_entry(273, data_offset);
  short_entry(277, 1);
  long_entry(279, static_cast<std::uint32_t>(px.size() * 2));
  u32(0);
  for (auto v : px) u16(v);
  return b;
}

}  // namespace

TEST_CASE("TIFF round trip is exact for float32 values") {
  std::mt19937_64 rng(1);
  ImageD img = test::random_image(3, 5, 7, rng, -0.5, 1.5);
  for (auto& v : img.data()) v = static_cast<float>(v);
  const auto path = scratch("round.tif");
  write_tiff(path, img);
  const ImageD back = read_image(path);
  REQUIRE(back.channels() == 3);
  REQUIRE(back.height() == 5);
  REQUIRE(back.width() == 7);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.data()[i] == img.data()[i]);
}

TEST_CASE("TIFF reader handles big-endian 16-bit files") {
  const std::vector<std::uint16_t> px = {0, 65535, 1000, 32768, 7, 60000};
  const auto bytes = big_endian_tiff(3, 2, px);
  const auto path = scratch("be16.tiff");
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const ImageD img = read_tiff(path);
  REQUIRE(img.channels() == 1);
  REQUIRE(img.height() == 2);
  REQUIRE(img.width() == 3);
  for (int i = 0; i < 6; ++i) CHECK(img.data()[i] == doctest::Approx(px[i] / 65535.0).epsilon(1e-15));

  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(truncated.data()), truncated.size());
  CHECK_THROWS(read_tiff(path));
}

TEST_CASE("PNG round trip quantizes to 8 bits") {
  std::mt19937_64 rng(2);
  for (int c : {1, 3}) {
    const ImageD img = test::random_image(c, 6, 9, rng, 0.0, 1.0);
    const auto path = scratch("round" + std::to_string(c) + ".png");
    write_png(path, img);
    const ImageD back = read_image(path);
    REQUIRE(back.channels() == c);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5 / 255 + 1e-12);
  }
  ImageD out_of_range(1, 2, 2, 2.0);
  out_of_range(0, 0, 0) = -1.0;
  const auto path = scratch("clamp.png");
  write_png(path, out_of_range);
  const ImageD back = read_png(path);
  CHECK(back(0, 0, 0) == 0.0);
  CHECK(back(0, 1, 1) == 1.0);
  CHECK_THROWS(read_image(scratch("missing.png")));
  CHECK_THROWS(read_image(scratch("file.bmp")));
}

TEST_CASE("config parsing") {
  const auto c = parse_config(R"({"task": "pansharpening", "seed": 3,
      "dataset": {"tile_size": 64, "synthetic": {"channels": 4}},
      "operator": {"factor": 4},
      "loss": {"terms": "mc+tv+ei", "group": {"kind": "pan_tilt", "alpha": 0.5}},
      "optimizer": {"epochs": 7}})",
                              "/base");
  CHECK(c.task == Task::pansharpening);
  CHECK(c.seed == 3);
  CHECK(c.model.channels == 4);
  CHECK(c.model.factor == 4);
  CHECK(c.loss.terms.size() == 3);
  CHECK(c.loss.group.range_fraction == 0.5);
  CHECK(c.loss.group.height == 64);
  CHECK(c.optimizer.epochs == 7);
  CHECK(c.optimizer.learning_rate == 1e-3);
  CHECK(c.optimizer.decay == 0.9);
  CHECK(c.output_dir == fs::path("/base/run"));
  CHECK_NOTHROW(c.validate());
  CHECK(c.metric_names().size() == 4);

  // dump -> parse is a fixed point.
  const auto dumped = dump_config(c);
  CHECK(dump_config(parse_config(dumped)) == dumped);

  const auto d = parse_config("{}");
  CHECK(d.loss.group.kind == TransformKind::pan_tilt);
  CHECK(d.loss.group.range_fraction == 0.1);
  CHECK(d.loss.group.focal == 100.0);
  CHECK(d.metric_names() == std::vector<std::string>{"psnr", "ssim"});
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sed": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"hiden": 4}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"task": "deblur"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"loss": {"terms": "mc+foo"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"noise": {"kind": "laplace"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"loss": {"group": {"kind": "warp"}}})"), ConfigError);

  auto invalid = [](const char* text) { CHECK_THROWS_AS(parse_config(text).validate(), ConfigError); };
  invalid(R"({"dataset": {"tile_size": 4}})");
  invalid(R"({"dataset": {"test_fraction": 1.0}})");
  invalid(R"({"operator": {"mask_fraction": 1.0}})");
  invalid(R"({"task": "pansharpening", "dataset": {"tile_size": 30}, "operator": {"factor": 4}})");
  invalid(R"({"task": "pansharpening", "operator": {"srf": [0.5, 0.6, 0.0]}})");
  invalid(R"({"task": "pansharpening", "operator": {"srf": [0.5, 0.5]}})");
  invalid(R"({"noise": {"kind": "gaussian", "sigma": -1}})");
  invalid(R"({"loss": {"terms": "tv"}})");
  invalid(R"({"loss": {"terms": "mc", "group": {"alpha": 0}}})");
  invalid(R"({"optimizer": {"lr": 0}})");
  invalid(R"({"optimizer": {"decay": 1.5}})");
  invalid(R"({"optimizer": {"batch_size": 0}})");
  invalid(R"({"eval": {"metrics": ["qnr"]}})");
  invalid(R"({"eval": {"metrics": ["lpips"]}})");
  invalid(R"({"model": {"kernel_size": 2}})");
  invalid(R"({"dataset": {"source_dir": "/does/not/exist"}})");
}
