#pragma once

// Rigid-body algebra on SE(3). Rotations are unit quaternions, translations
// are millimetres, angles are radians.

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace insideout {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Rotation about `axis` (need not be unit) by `angle` radians.
Quat rotation_about(const Vec3& axis, double angle);
/// Rotation from a rotation vector (axis scaled by angle).
Quat rotation_from_vector(const Vec3& rotvec);
/// Inverse of rotation_from_vector, angle in [0, pi].
Vec3 rotation_to_vector(const Quat& q);

/// Pose mapping points from frame A into frame B (written T^B_A).
/// The quaternion is renormalized on every construction unless it is
/// already unit to rounding.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Quat::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Quat& rotation, const Vec3& translation);
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Quat::Identity(), t}; }
  static RigidTransform from_rotation(const Quat& q) { return {q, Vec3::Zero()}; }
  static RigidTransform from_matrix(const Mat4& m);

  const Quat& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
  Mat4 matrix() const;

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 apply_inverse(const Vec3& p) const {
    return rotation_.conjugate() * (p - translation_);
  }

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

 private:
  Quat rotation_;
  Vec3 translation_;
};

struct AxisAngle {
  Vec3 axis = Vec3::UnitX();
  double angle = 0.0;
};

/// a ∘ b: maps a point through b, then through a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

/// Angle of r1⁻¹·r2 in [0, pi]. Symmetric.
double geodesic_angle(const Quat& r1, const Quat& r2);

/// Axis-angle with angle in [0, pi]; axis is (1,0,0) when angle <= 1e-9.
AxisAngle to_axis_angle(const Quat& r);

/// Shortest-arc slerp on rotation, lerp on translation.
RigidTransform interpolate(const RigidTransform& a, const RigidTransform& b, double alpha);

/// Translation distance plus geodesic angle, handy for tolerances in tests.
struct PoseDelta {
  double translation_mm = 0.0;
  double rotation_rad = 0.0;
};
PoseDelta pose_delta(const RigidTransform& a, const RigidTransform& b);

}  // namespace insideout
