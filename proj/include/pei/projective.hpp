#pragma once

// Homographies between pinhole cameras sharing a centre, and the subgroups
// of PGL(3) obtained by freeing a subset of camera parameters.

#include <optional>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace pei {

using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;

struct CameraIntrinsics {
  double focal = 1.0;    // pixels
  double scale_x = 1.0;  // m_x
  double scale_y = 1.0;  // m_y
  double skew = 0.0;     // pixels
  double u0 = 0.0;
  double v0 = 0.0;

  void validate() const;
};

/// Rotation of the image plane about the camera centre, radians.
struct EulerAngles {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// 3x3 invertible matrix acting on homogeneous pixel coordinates (u, v, 1).
///
/// Stored normalized so that m(2,2) == 1 whenever |m(2,2)| > 1e-12. Matrices
/// whose bottom-right entry vanishes are kept as-is and flagged.
class Homography {
 public:
  Homography() : m_(Mat3::Identity()) {}
  explicit Homography(const Mat3& m);

  static Homography identity() { return Homography(); }

  const Mat3& matrix() const { return m_; }
  bool normalized() const { return normalized_; }
  double operator()(int r, int c) const { return m_(r, c); }

 private:
  Mat3 m_;
  bool normalized_ = true;
};

constexpr double kNormalizeThreshold = 1e-12;
constexpr double kAtInfinityEps = 1e-9;
constexpr double kMaxConditionNumber = 1e12;
constexpr double kPerspectiveEps = 1e-12;

Mat3 intrinsics_matrix(const CameraIntrinsics& k);
/// Inverse of the upper-triangular intrinsics matrix, in closed form.
Mat3 intrinsics_inverse(const CameraIntrinsics& k);
/// R = Rz(z) * Ry(y) * Rx(x).
Mat3 rotation_matrix(const EulerAngles& a);

/// K' R K^-1.
Homography homography_from_cameras(const CameraIntrinsics& k, const CameraIntrinsics& k2,
                                   const EulerAngles& a);
/// K R K^-1: the image of R under the SO(3) -> PGL(3) conjugation map.
Homography camera_rotation_homography(const CameraIntrinsics& k, const EulerAngles& a);
Homography camera_rotation_homography(const CameraIntrinsics& k, const Mat3& rotation);

/// h1 * h2, i.e. apply h2 first.
Homography compose(const Homography& h1, const Homography& h2);
/// Throws DegenerateTransformError when cond(h) > kMaxConditionNumber.
Homography inverse(const Homography& h);
double condition_number(const Homography& h);

/// Maps a finite pixel coordinate. std::nullopt means the image is a point at
/// infinity (|w'| below kAtInfinityEps relative to the homogeneous vector).
std::optional<Vec2> apply_point(const Homography& h, const Vec2& p);

/// True iff points at infinity are mapped to finite (vanishing) points.
bool is_perspective(const Homography& h);

/// Largest tilt that keeps the vanishing line out of the frame: atan(f / v0).
double max_pan_tilt(double focal, double v0);

enum class TransformKind { shift, rotation, scale, similarity, affine, pan_tilt, perspective };

std::string_view to_string(TransformKind kind);
TransformKind transform_kind_from_string(std::string_view name);

/// Full-range parameter bounds, scaled linearly by GroupSpec::range_fraction.
struct TransformBounds {
  double shift_fraction = 0.5;       // |du| <= frac * W, |dv| <= frac * H
  double rotation_deg = 180.0;       // theta_z in [-deg, deg)
  double min_scale_ratio = 0.5;      // f / f' in [min, 1]
  double skew_fraction = 0.5;        // s' in [-frac * f, frac * f]
  double min_stretch_ratio = 0.5;    // m'/m in [min, 1]
  double pan_tilt_deg = 9.0;         // theta_x, theta_y in [-deg, deg]
};

struct GroupSpec {
  TransformKind kind = TransformKind::pan_tilt;
  double range_fraction = 0.1;
  TransformBounds bounds;
  int height = 128;
  int width = 128;
  double focal = 100.0;

  void validate() const;
};

/// Parameters of one sampled group element, in camera terms.
struct TransformParams {
  CameraIntrinsics base;
  CameraIntrinsics moved;
  EulerAngles angles;
};

/// Base camera: f = spec.focal, principal point at the image centre.
CameraIntrinsics base_intrinsics(const GroupSpec& spec);

TransformParams sample_transform_params(const GroupSpec& spec, std::mt19937_64& rng);
/// Draws one group element; redraws while the result is ill-conditioned.
Homography sample_transform(const GroupSpec& spec, std::mt19937_64& rng);

}  // namespace pei
