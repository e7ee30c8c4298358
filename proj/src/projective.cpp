#include "pei/projective.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "pei/errors.hpp"

namespace pei {

namespace {

constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

constexpr std::array<std::pair<TransformKind, std::string_view>, 7> kKindNames{{
    {TransformKind::shift, "shift"},
    {TransformKind::rotation, "rotation"},
    {TransformKind::scale, "scale"},
    {TransformKind::similarity, "similarity"},
    {TransformKind::affine, "affine"},
    {TransformKind::pan_tilt, "pan_tilt"},
    {TransformKind::perspective, "perspective"},
}};

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(focal > 0.0) || !(scale_x > 0.0) || !(scale_y > 0.0)) {
    throw std::invalid_argument("camera intrinsics require f > 0, m_x > 0, m_y > 0");
  }
  if (!std::isfinite(skew) || !std::isfinite(u0) || !std::isfinite(v0)) {
    throw std::invalid_argument("camera intrinsics must be finite");
  }
}

Homography::Homography(const Mat3& m) : m_(m) {
  if (!m.allFinite()) throw DegenerateTransformError("homography has non-finite entries");
  if (std::abs(m(2, 2)) > kNormalizeThreshold) {
    m_ /= m(2, 2);
    normalized_ = true;
  } else {
    normalized_ = false;
  }
}

Mat3 intrinsics_matrix(const CameraIntrinsics& k) {
  Mat3 m;
  m << k.focal * k.scale_x, k.skew, k.u0,
       0.0, k.focal * k.scale_y, k.v0,
       0.0, 0.0, 1.0;
  return m;
}

Mat3 intrinsics_inverse(const CameraIntrinsics& k) {
  const double a = k.focal * k.scale_x;
  const double d = k.focal * k.scale_y;
  const double b = k.skew;
  Mat3 m;
  m << 1.0 / a, -b / (a * d), (b * k.v0 - d * k.u0) / (a * d),
       0.0, 1.0 / d, -k.v0 / d,
       0.0, 0.0, 1.0;
  return m;
}

Mat3 rotation_matrix(const EulerAngles& a) {
  const double cx = std::cos(a.x), sx = std::sin(a.x);
  const double cy = std::cos(a.y), sy = std::sin(a.y);
  const double cz = std::cos(a.z), sz = std::sin(a.z);
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  return rz * ry * rx;
}

Homography homography_from_cameras(const CameraIntrinsics& k, const CameraIntrinsics& k2,
                                   const EulerAngles& a) {
  k.validate();
  k2.validate();
  const Mat3 m = intrinsics_matrix(k2) * (rotation_matrix(a) * intrinsics_inverse(k));
  return Homography(m);
}

Homography camera_rotation_homography(const CameraIntrinsics& k, const Mat3& rotation) {
  k.validate();
  return Homography(intrinsics_matrix(k) * (rotation * intrinsics_inverse(k)));
}

Homography camera_rotation_homography(const CameraIntrinsics& k, const EulerAngles& a) {
  return camera_rotation_homography(k, rotation_matrix(a));
}

Homography compose(const Homography& h1, const Homography& h2) {
  return Homography(h1.matrix() * h2.matrix());
}

double condition_number(const Homography& h) {
  Eigen::JacobiSVD<Mat3> svd(h.matrix());
  const auto& s = svd.singularValues();
  if (s(2) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(2);
}

Homography inverse(const Homography& h) {
  if (condition_number(h) > kMaxConditionNumber) {
    throw DegenerateTransformError("homography is numerically singular");
  }
  return Homography(h.matrix().inverse());
}

std::optional<Vec2> apply_point(const Homography& h, const Vec2& p) {
  const Eigen::Vector3d q = h.matrix() * Eigen::Vector3d(p.x(), p.y(), 1.0);
  const double scale = q.cwiseAbs().maxCoeff();
  if (scale == 0.0 || std::abs(q.z()) <= kAtInfinityEps * scale) return std::nullopt;
  return Vec2(q.x() / q.z(), q.y() / q.z());
}

bool is_perspective(const Homography& h) {
  const Mat3& m = h.matrix();
  // Scale-free so that unnormalized matrices are classified consistently.
  const double scale = h.normalized() ? 1.0 : m.cwiseAbs().maxCoeff();
  return std::abs(m(2, 0)) > kPerspectiveEps * scale ||
         std::abs(m(2, 1)) > kPerspectiveEps * scale;
}

double max_pan_tilt(double focal, double v0) {
  if (!(focal > 0.0) || !(v0 > 0.0)) {
    throw std::invalid_argument("max_pan_tilt requires f > 0 and v0 > 0");
  }
  return std::atan(focal / v0);
}

std::string_view to_string(TransformKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

TransformKind transform_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw std::invalid_argument("unknown transform kind: " + std::string(name));
}

void GroupSpec::validate() const {
  if (!(range_fraction > 0.0 && range_fraction <= 1.0)) {
    throw std::invalid_argument("range_fraction must lie in (0, 1]");
  }
  if (height < 1 || width < 1) throw std::invalid_argument("group spec image size must be positive");
  if (!(focal > 0.0)) throw std::invalid_argument("group spec focal length must be positive");
  const auto& b = bounds;
  if (b.shift_fraction < 0 || b.rotation_deg < 0 || b.skew_fraction < 0 || b.pan_tilt_deg < 0 ||
      !(b.min_scale_ratio > 0 && b.min_scale_ratio <= 1) ||
      !(b.min_stretch_ratio > 0 && b.min_stretch_ratio <= 1)) {
    throw std::invalid_argument("invalid transform bounds");
  }
}

CameraIntrinsics base_intrinsics(const GroupSpec& spec) {
  CameraIntrinsics k;
  k.focal = spec.focal;
  k.u0 = 0.5 * spec.width;
  k.v0 = 0.5 * spec.height;
  return k;
}

TransformParams sample_transform_params(const GroupSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const double a = spec.range_fraction;
  const auto& b = spec.bounds;
  auto uniform = [&rng](double lo, double hi) {
    if (hi <= lo) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto symmetric = [&](double half) { return uniform(-half, half); };

  TransformParams p;
  p.base = base_intrinsics(spec);
  p.moved = p.base;

  const bool shift = spec.kind == TransformKind::shift;
  const bool similarity_like = spec.kind == TransformKind::similarity ||
                               spec.kind == TransformKind::affine ||
                               spec.kind == TransformKind::perspective;
  const bool rotation = spec.kind == TransformKind::rotation || similarity_like;
  const bool scale = spec.kind == TransformKind::scale || similarity_like;
  const bool tilt = spec.kind == TransformKind::pan_tilt || spec.kind == TransformKind::perspective;

  if (shift || similarity_like) {
    p.moved.u0 += symmetric(a * b.shift_fraction * spec.width);
    p.moved.v0 += symmetric(a * b.shift_fraction * spec.height);
  }
  if (rotation) {
    const double r = a * deg2rad(b.rotation_deg);
    p.angles.z = uniform(-r, r);
  }
  if (scale) {
    const double ratio = uniform(1.0 - a * (1.0 - b.min_scale_ratio), 1.0);  // f / f'
    p.moved.focal = p.base.focal / ratio;
  }
  if (spec.kind == TransformKind::affine) {
    p.moved.skew = symmetric(a * b.skew_fraction * p.base.focal);
    p.moved.scale_x = uniform(1.0 - a * (1.0 - b.min_stretch_ratio), 1.0);
    p.moved.scale_y = uniform(1.0 - a * (1.0 - b.min_stretch_ratio), 1.0);
  }
  if (tilt) {
    const double t = a * deg2rad(b.pan_tilt_deg);
    p.angles.x = symmetric(t);
    p.angles.y = symmetric(t);
  }
  return p;
}

Homography sample_transform(const GroupSpec& spec, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const TransformParams p = sample_transform_params(spec, rng);
    Homography h = homography_from_cameras(p.base, p.moved, p.angles);
    if (condition_number(h) <= kMaxConditionNumber) return h;
  }
  throw DegenerateTransformError("could not draw a well-conditioned transform");
}

}  // namespace pei
