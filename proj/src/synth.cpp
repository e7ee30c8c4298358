#include "pei/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "pei/projective.hpp"

namespace pei {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform [0, 1) from a scene key and integer coordinates.
double hash01(std::uint64_t key, std::int64_t a, std::int64_t b, std::uint64_t salt) {
  std::uint64_t h = splitmix(key ^ salt);
  h = splitmix(h ^ static_cast<std::uint64_t>(a));
  h = splitmix(h ^ static_cast<std::uint64_t>(b));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct Curve {
  std::vector<std::pair<double, double>> points;  // (nm, reflectance)

  double at(double nm) const {
    if (nm <= points.front().first) return points.front().second;
    if (nm >= points.back().first) return points.back().second;
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (nm <= points[i].first) {
        const auto [x0, y0] = points[i - 1];
        const auto [x1, y1] = points[i];
        return y0 + (y1 - y0) * (nm - x0) / (x1 - x0);
      }
    }
    return points.back().second;
  }
};

Curve curve(Material m) {
  switch (m) {
    case Material::asphalt: return {{{450, 0.08}, {850, 0.12}}};
    case Material::concrete: return {{{450, 0.30}, {850, 0.38}}};
    case Material::roof_red: return {{{450, 0.10}, {550, 0.12}, {660, 0.36}, {850, 0.42}}};
    case Material::roof_gray: return {{{450, 0.20}, {850, 0.25}}};
    case Material::roof_white: return {{{450, 0.62}, {850, 0.66}}};
    case Material::vegetation: return {{{450, 0.04}, {550, 0.11}, {660, 0.05}, {720, 0.32}, {850, 0.50}}};
    case Material::dry_grass: return {{{450, 0.08}, {550, 0.15}, {660, 0.17}, {850, 0.34}}};
    case Material::water: return {{{450, 0.09}, {550, 0.07}, {660, 0.03}, {850, 0.01}}};
    case Material::paint: return {{{450, 0.72}, {850, 0.74}}};
  }
  return {{{450, 0.0}}};
}

constexpr int kMaterials = 9;

struct Scene {
  std::uint64_t key;
  double phi;        // street grid orientation
  double off_a, off_b;
  double pitch;      // block pitch (m)
  double street;     // street width (m)
  double sun_a, sun_b;  // shadow offset direction (m)
  std::array<std::vector<double>, kMaterials> sig;
  int channels;

  void paint(Material m, double gain, double* out) const {
    const auto& s = sig[static_cast<int>(m)];
    for (int c = 0; c < channels; ++c) out[c] = s[c] * gain;
  }

  double noise(double x, double y) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    const double tx = x - fx, ty = y - fy;
    auto v = [&](std::int64_t a, std::int64_t b) { return 2.0 * hash01(key, a, b, 77) - 1.0; };
    const double top = v(ix, iy) * (1 - tx) + v(ix + 1, iy) * tx;
    const double bot = v(ix, iy + 1) * (1 - tx) + v(ix + 1, iy + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }

  // Roof footprints of a building block, in block-interior coordinates.
  struct Rect {
    double a0, a1, b0, b1;
    bool contains(double a, double b) const { return a >= a0 && a < a1 && b >= b0 && b < b1; }
  };

  void lots(std::int64_t i, std::int64_t j, double inner, std::vector<Rect>& out) const {
    out.clear();
    const int n = 1 + static_cast<int>(hash01(key, i, j, 3) * 3.0);
    const bool along_a = hash01(key, i, j, 4) < 0.5;
    const double w = inner / n;
    for (int k = 0; k < n; ++k) {
      const double m = 1.5 + 2.5 * hash01(key, i * 7 + k, j, 5);
      const double m2 = 1.5 + 4.0 * hash01(key, i, j * 7 + k, 6);
      Rect r = along_a ? Rect{k * w + m, (k + 1) * w - m, m2, inner - m2}
                       : Rect{m2, inner - m2, k * w + m, (k + 1) * w - m};
      if (r.a1 > r.a0 + 1.0 && r.b1 > r.b0 + 1.0) out.push_back(r);
    }
  }

  void colour(double x, double y, double* out) const {
    const double ca = std::cos(phi), sa = std::sin(phi);
    const double a = ca * x - sa * y + off_a;
    const double b = sa * x + ca * y + off_b;
    const auto i = static_cast<std::int64_t>(std::floor(a / pitch));
    const auto j = static_cast<std::int64_t>(std::floor(b / pitch));
    const double la = a - i * pitch;
    const double lb = b - j * pitch;
    const double tex = 1.0 + 0.06 * noise(x / 2.5, y / 2.5);

    if (la < street || lb < street) {
      const bool dash_a = la < street && std::abs(la - street / 2) < 0.25 && std::fmod(std::abs(b), 6.0) < 3.0;
      const bool dash_b = lb < street && std::abs(lb - street / 2) < 0.25 && std::fmod(std::abs(a), 6.0) < 3.0;
      const bool crossing = la < street && lb < street;
      paint((dash_a || dash_b) && !crossing ? Material::paint : Material::asphalt, tex, out);
      return;
    }
    const double inner = pitch - street;
    const double ia = la - street;
    const double ib = lb - street;
    const double kind = hash01(key, i, j, 1);
    const double gain = (0.85 + 0.3 * hash01(key, i, j, 2)) * tex;

    if (kind < 0.55) {
      thread_local std::vector<Rect> roofs;
      lots(i, j, inner, roofs);
      for (std::size_t k = 0; k < roofs.size(); ++k) {
        const Rect& r = roofs[k];
        if (!r.contains(ia, ib)) continue;
        const double pick = hash01(key, i * 13 + static_cast<std::int64_t>(k), j, 8);
        const Material m = pick < 0.35 ? Material::roof_gray : pick < 0.7 ? Material::roof_red : Material::roof_white;
        const double rim = std::min({ia - r.a0, r.a1 - ia, ib - r.b0, r.b1 - ib}) < 0.6 ? 0.7 : 1.0;
        const double ua = (r.a0 + r.a1) / 2, ub = (r.b0 + r.b1) / 2;
        const bool unit = std::abs(ia - ua - 1.0) < 0.15 * (r.a1 - r.a0) && std::abs(ib - ub) < 0.12 * (r.b1 - r.b0);
        paint(unit ? Material::concrete : m, gain * rim * (unit ? 1.15 : 1.0), out);
        return;
      }
      bool shade = false;
      for (const Rect& r : roofs) shade = shade || r.contains(ia - sun_a, ib - sun_b);
      paint(Material::concrete, gain * (shade ? 0.5 : 1.0), out);
      return;
    }
    if (kind < 0.75) {
      const Material base = hash01(key, i, j, 9) < 0.5 ? Material::vegetation : Material::dry_grass;
      // Trees on a jittered 6 m lattice.
      const double cell = 6.0;
      bool canopy = false, shade = false;
      const auto ca0 = static_cast<std::int64_t>(std::floor(a / cell));
      const auto cb0 = static_cast<std::int64_t>(std::floor(b / cell));
      for (std::int64_t u = ca0 - 1; u <= ca0 + 1; ++u) {
        for (std::int64_t v = cb0 - 1; v <= cb0 + 1; ++v) {
          if (hash01(key, u, v, 10) > 0.55) continue;
          const double cx = (u + 0.2 + 0.6 * hash01(key, u, v, 11)) * cell;
          const double cy = (v + 0.2 + 0.6 * hash01(key, u, v, 12)) * cell;
          const double rad = 1.5 + 1.3 * hash01(key, u, v, 13);
          const double da = a - cx, db = b - cy;
          if (da * da + db * db < rad * rad) canopy = true;
          const double sa2 = da - sun_a * 0.5, sb2 = db - sun_b * 0.5;
          if (sa2 * sa2 + sb2 * sb2 < rad * rad) shade = true;
        }
      }
      if (canopy) {
        paint(Material::vegetation, gain * 0.75, out);
      } else {
        paint(base, gain * (shade ? 0.55 : 1.0), out);
      }
      return;
    }
    if (kind < 0.9) {
      const bool line = std::fmod(ia, 2.8) < 0.15 && std::fmod(ib, inner / 2) > 1.0;
      paint(line ? Material::paint : Material::asphalt, line ? tex : gain, out);
      return;
    }
    if (kind < 0.95) {
      paint(Material::water, gain, out);
      return;
    }
    const bool tile = (static_cast<int>(std::floor(ia / 3.0)) + static_cast<int>(std::floor(ib / 3.0))) % 2 == 0;
    paint(Material::concrete, gain * (tile ? 1.0 : 0.85), out);
  }
};

}  // namespace

std::vector<double> band_centres(int channels) {
  if (channels < 1) throw std::invalid_argument("channels must be >= 1");
  static const std::array<double, 4> kDefault{660.0, 550.0, 480.0, 830.0};
  std::vector<double> out;
  if (channels <= 4) {
    for (int c = 0; c < channels; ++c) out.push_back(kDefault[c]);
    return out;
  }
  for (int c = 0; c < channels; ++c) out.push_back(450.0 + 400.0 * c / (channels - 1));
  return out;
}

std::vector<double> material_signature(Material m, int channels) {
  const Curve k = curve(m);
  std::vector<double> out;
  for (double nm : band_centres(channels)) out.push_back(k.at(nm));
  return out;
}

ImageD synth_urban_scene(const SynthOptions& options, std::mt19937_64& rng) {
  if (options.size < 1 || options.supersample < 1) throw std::invalid_argument("bad synthesis size");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene s;
  s.key = rng();
  s.channels = options.channels;
  s.phi = u(rng) * std::numbers::pi;
  s.pitch = 30.0 + 30.0 * u(rng);
  s.street = 5.0 + 5.0 * u(rng);
  s.off_a = u(rng) * 1000.0;
  s.off_b = u(rng) * 1000.0;
  const double sun = u(rng) * 2.0 * std::numbers::pi;
  const double len = 2.0 + 2.5 * u(rng);
  s.sun_a = len * std::cos(sun);
  s.sun_b = len * std::sin(sun);
  for (int m = 0; m < kMaterials; ++m) s.sig[m] = material_signature(static_cast<Material>(m), options.channels);

  // Ground metres -> nadir pixels -> tilted camera.
  const int n = options.size;
  const double metres_per_px = 0.5 + 0.5 * u(rng);
  const double tilt = options.max_tilt_deg * std::numbers::pi / 180.0;
  CameraIntrinsics k;
  k.focal = 1.2 * n;
  k.u0 = n / 2.0;
  k.v0 = n / 2.0;
  const EulerAngles ang{(2 * u(rng) - 1) * tilt, (2 * u(rng) - 1) * tilt, u(rng) * 2 * std::numbers::pi};
  Mat3 scale = Mat3::Identity();
  scale(0, 0) = scale(1, 1) = 1.0 / metres_per_px;
  scale(0, 2) = n / 2.0;
  scale(1, 2) = n / 2.0;
  const Mat3 img_from_ground = camera_rotation_homography(k, ang).matrix() * scale;
  const Mat3 ground_from_img = img_from_ground.inverse();

  const int ss = options.supersample;
  ImageD img(options.channels, n, n);
  std::vector<double> acc(static_cast<std::size_t>(options.channels));
  std::vector<double> sample(static_cast<std::size_t>(options.channels));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Eigen::Vector3d p(x + (sx + 0.5) / ss, y + (sy + 0.5) / ss, 1.0);
          const Eigen::Vector3d g = ground_from_img * p;
          if (g.z() <= 1e-9) {
            std::fill(sample.begin(), sample.end(), 0.7);
          } else {
            s.colour(g.x() / g.z(), g.y() / g.z(), sample.data());
          }
          for (int c = 0; c < options.channels; ++c) acc[c] += sample[c];
        }
      }
      for (int c = 0; c < options.channels; ++c) {
        img(c, y, x) = std::clamp(options.exposure * acc[c] / (ss * ss), 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace pei
