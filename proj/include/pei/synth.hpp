#pragma once

// Synthetic off-nadir urban scenes: a procedural city map (street grid,
// roofs, parks, parking lots, water) seen through a tilted pinhole camera.
// Materials carry smooth spectral reflectance curves sampled at the band
// centres, so multispectral channels are correlated but not identical.

#include <random>
#include <vector>

#include "pei/image.hpp"

namespace pei {

enum class Material { asphalt, concrete, roof_red, roof_gray, roof_white, vegetation, dry_grass, water, paint };

/// Band centres in nm: R, G, B for up to three channels, plus NIR for four;
/// larger counts are spread evenly over 450-850 nm.
std::vector<double> band_centres(int channels);

/// Reflectance of a material at each band centre, in [0, 1].
std::vector<double> material_signature(Material m, int channels);

struct SynthOptions {
  int channels = 3;
  int size = 128;
  int supersample = 2;
  double max_tilt_deg = 25.0;
  double exposure = 1.5;
};

/// Renders one scene; all randomness comes from `rng`.
ImageD synth_urban_scene(const SynthOptions& options, std::mt19937_64& rng);

}  // namespace pei
