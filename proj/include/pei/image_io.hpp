#pragma once

#include <filesystem>

#include "pei/image.hpp"

namespace pei {

/// Reads an 8- or 16-bit PNG into [0, 1]. Palette images are expanded; an
/// alpha channel is dropped.
ImageD read_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG, clamping to [0, 1]. One channel gives grayscale;
/// three or more write the first three as RGB; two write the first channel.
void write_png(const std::filesystem::path& path, const ImageD& image);

/// Uncompressed little-endian TIFF with float32 samples, chunky layout, one
/// strip. Values are stored as is.
void write_tiff(const std::filesystem::path& path, const ImageD& image);

/// Reads uncompressed TIFF (either byte order, chunky or planar, any strip
/// layout) with 8/16-bit unsigned or 32-bit float samples. Integer samples
/// are scaled to [0, 1].
ImageD read_tiff(const std::filesystem::path& path);

/// Dispatches on the extension (.png, .tif, .tiff).
ImageD read_image(const std::filesystem::path& path);

}  // namespace pei
