#include "pei/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <stdexcept>

namespace pei {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

}  // namespace

ImageD read_png(const std::filesystem::path& path) {
  File f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("cannot decode PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING, nullptr);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int nc = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);

  ImageD img(nc, h, w);
  const double scale = depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
  for (int y = 0; y < h; ++y) {
    const png_bytep row = rows[y];
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < nc; ++c) {
        const std::size_t k = static_cast<std::size_t>(x) * nc + c;
        const double v = depth == 16 ? (row[2 * k] << 8 | row[2 * k + 1]) : row[k];
        img(c, y, x) = v * scale;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const ImageD& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const int nc = image.channels() >= 3 ? 3 : 1;
  const int w = image.width();
  const int h = image.height();
  std::vector<png_byte> buf(static_cast<std::size_t>(w) * h * nc);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < nc; ++c) {
        const double v = std::clamp(image(c, y, x), 0.0, 1.0);
        buf[(static_cast<std::size_t>(y) * w + x) * nc + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
  }

  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("cannot encode PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               nc == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w * nc;
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

enum : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kPhotometric = 262,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kPlanarConfig = 284,
  kExtraSamples = 338,
  kSampleFormat = 339,
};

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class TiffReader {
 public:
  explicit TiffReader(std::vector<std::uint8_t> bytes) : b_(std::move(bytes)) {
    if (b_.size() < 8) fail("file too short");
    if (b_[0] == 'I' && b_[1] == 'I') {
      little_ = true;
    } else if (b_[0] == 'M' && b_[1] == 'M') {
      little_ = false;
    } else {
      fail("bad byte-order mark");
    }
    if (u16(2) != 42) fail("not a classic TIFF");
  }

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return little_ ? static_cast<std::uint16_t>(b_[at] | b_[at + 1] << 8)
                   : static_cast<std::uint16_t>(b_[at] << 8 | b_[at + 1]);
  }
  std::uint32_t u32(std::size_t at) const {
    need(at, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const int shift = little_ ? 8 * i : 8 * (3 - i);
      v |= static_cast<std::uint32_t>(b_[at + i]) << shift;
    }
    return v;
  }

  /// Values of a SHORT or LONG tag.
  std::vector<std::uint32_t> tag(std::uint16_t id) const {
    const auto it = entries_.find(id);
    if (it == entries_.end()) return {};
    const auto [type, count, field] = it->second;
    const std::size_t width = type == 3 ? 2 : 4;
    if (type != 3 && type != 4) fail("unsupported tag type");
    const std::size_t base = count * width <= 4 ? field : u32(field);
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      out.push_back(width == 2 ? u16(base + i * 2) : u32(base + i * 4));
    }
    return out;
  }

  void parse_ifd() {
    const std::size_t ifd = u32(4);
    const std::uint16_t n = u16(ifd);
    for (std::uint16_t k = 0; k < n; ++k) {
      const std::size_t e = ifd + 2 + 12u * k;
      entries_[u16(e)] = {u16(e + 2), u32(e + 4), e + 8};
    }
  }

  const std::vector<std::uint8_t>& bytes() const { return b_; }
  bool little() const { return little_; }

  [[noreturn]] static void fail(const std::string& what) { throw std::runtime_error("TIFF: " + what); }

 private:
  void need(std::size_t at, std::size_t n) const {
    if (at + n > b_.size()) fail("truncated");
  }

  struct Entry {
    std::uint16_t type;
    std::uint32_t count;
    std::size_t field;
  };
  std::vector<std::uint8_t> b_;
  bool little_ = true;
  std::map<std::uint16_t, Entry> entries_;
};

std::uint32_t one(const TiffReader& r, std::uint16_t id, std::uint32_t fallback) {
  const auto v = r.tag(id);
  return v.empty() ? fallback : v[0];
}

}  // namespace

void write_tiff(const std::filesystem::path& path, const ImageD& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::uint32_t w = static_cast<std::uint32_t>(image.width());
  const std::uint32_t h = static_cast<std::uint32_t>(image.height());
  const std::uint16_t spp = static_cast<std::uint16_t>(image.channels());
  const std::uint32_t data_bytes = w * h * spp * 4;

  struct Tag {
    std::uint16_t id, type;
    std::vector<std::uint32_t> values;
  };
  std::vector<Tag> tags = {
      {kImageWidth, 4, {w}},
      {kImageLength, 4, {h}},
      {kBitsPerSample, 3, std::vector<std::uint32_t>(spp, 32)},
      {kCompression, 3, {1}},
      {kPhotometric, 3, {1}},
      {kStripOffsets, 4, {0}},  // patched below
      {kSamplesPerPixel, 3, {spp}},
      {kRowsPerStrip, 4, {h}},
      {kStripByteCounts, 4, {data_bytes}},
      {kPlanarConfig, 3, {1}},
  };
  if (spp > 1) tags.push_back({kExtraSamples, 3, std::vector<std::uint32_t>(spp - 1u, 0)});
  tags.push_back({kSampleFormat, 3, std::vector<std::uint32_t>(spp, 3)});

  // Layout: header, IFD, out-of-line tag arrays, pixel data.
  const std::size_t ifd_size = 2 + 12 * tags.size() + 4;
  std::size_t extra = 0;
  for (const auto& t : tags) {
    const std::size_t bytes = t.values.size() * (t.type == 3 ? 2 : 4);
    if (bytes > 4) extra += bytes;
  }
  const std::uint32_t data_offset = static_cast<std::uint32_t>(8 + ifd_size + extra);
  tags[5].values[0] = data_offset;

  std::vector<std::uint8_t> out{'I', 'I'};
  put16(out, 42);
  put32(out, 8);
  put16(out, static_cast<std::uint16_t>(tags.size()));
  std::vector<std::uint8_t> arrays;
  const std::size_t arrays_offset = 8 + ifd_size;
  for (const auto& t : tags) {
    put16(out, t.id);
    put16(out, t.type);
    put32(out, static_cast<std::uint32_t>(t.values.size()));
    const std::size_t bytes = t.values.size() * (t.type == 3 ? 2 : 4);
    std::vector<std::uint8_t> payload;
    for (auto v : t.values) {
      if (t.type == 3) {
        put16(payload, static_cast<std::uint16_t>(v));
      } else {
        put32(payload, v);
      }
    }
    if (bytes <= 4) {
      payload.resize(4, 0);
      out.insert(out.end(), payload.begin(), payload.end());
    } else {
      put32(out, static_cast<std::uint32_t>(arrays_offset + arrays.size()));
      arrays.insert(arrays.end(), payload.begin(), payload.end());
    }
  }
  put32(out, 0);
  out.insert(out.end(), arrays.begin(), arrays.end());
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      for (std::uint16_t c = 0; c < spp; ++c) {
        put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(image(c, static_cast<int>(y), static_cast<int>(x)))));
      }
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

ImageD read_tiff(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  TiffReader r(std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
  r.parse_ifd();

  const int w = static_cast<int>(one(r, kImageWidth, 0));
  const int h = static_cast<int>(one(r, kImageLength, 0));
  const int spp = static_cast<int>(one(r, kSamplesPerPixel, 1));
  const int bits = static_cast<int>(one(r, kBitsPerSample, 1));
  const auto format = one(r, kSampleFormat, 1);
  const auto planar = one(r, kPlanarConfig, 1);
  if (one(r, kCompression, 1) != 1) TiffReader::fail("compressed files are not supported");
  if (w < 1 || h < 1) TiffReader::fail("missing dimensions");
  const bool is_float = format == 3 && bits == 32;
  const bool is_uint = format == 1 && (bits == 8 || bits == 16);
  if (!is_float && !is_uint) TiffReader::fail("unsupported sample format");
  const auto offsets = r.tag(kStripOffsets);
  const auto counts = r.tag(kStripByteCounts);
  if (offsets.empty() || offsets.size() != counts.size()) TiffReader::fail("bad strip tables");

  // Concatenate strips: samples then follow in storage order.
  std::vector<std::uint8_t> data;
  for (std::size_t s = 0; s < offsets.size(); ++s) {
    if (static_cast<std::size_t>(offsets[s]) + counts[s] > r.bytes().size()) TiffReader::fail("truncated strip");
    data.insert(data.end(), r.bytes().begin() + offsets[s], r.bytes().begin() + offsets[s] + counts[s]);
  }
  const std::size_t bps = static_cast<std::size_t>(bits) / 8;
  const std::size_t total = static_cast<std::size_t>(w) * h * spp;
  if (data.size() < total * bps) TiffReader::fail("not enough pixel data");

  auto sample = [&](std::size_t k) -> double {
    const std::uint8_t* p = data.data() + k * bps;
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < bps; ++i) {
      const std::size_t shift = r.little() ? 8 * i : 8 * (bps - 1 - i);
      v |= static_cast<std::uint32_t>(p[i]) << shift;
    }
    if (is_float) return std::bit_cast<float>(v);
    return v / (bits == 8 ? 255.0 : 65535.0);
  };

  ImageD img(spp, h, w);
  for (int c = 0; c < spp; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        const std::size_t k = planar == 2 ? c * static_cast<std::size_t>(w) * h + pix : pix * spp + c;
        img(c, y, x) = sample(k);
      }
    }
  }
  return img;
}

ImageD read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") return read_png(path);
  if (ext == ".tif" || ext == ".tiff") return read_tiff(path);
  throw std::runtime_error("unsupported image format: " + path.string());
}

}  // namespace pei
