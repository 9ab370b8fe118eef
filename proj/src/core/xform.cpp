#include "insideout/xform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "insideout/error.hpp"

namespace insideout {

namespace {

Quat normalized_or_throw(const Quat& q) {
  const double n = q.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) {
    fail(ErrorCode::kInvalidArgument, "quaternion has zero or non-finite norm");
  }
  // Unit to rounding: dividing again would only shift the last bits.
  if (std::abs(q.squaredNorm() - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) return q;
  return Quat(q.coeffs() / n);
}

}  // namespace

Quat rotation_about(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < 1e-15) return Quat::Identity();
  const Vec3 u = axis / n;
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return Quat(std::cos(h), s * u.x(), s * u.y(), s * u.z());
}

Quat rotation_from_vector(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    // First-order expansion, then normalize.
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    q.normalize();
    return q;
  }
  return rotation_about(rotvec, angle);
}

Vec3 rotation_to_vector(const Quat& q) {
  const AxisAngle aa = to_axis_angle(q);
  if (aa.angle <= 1e-9) {
    // Small-angle: vector part is half the rotation vector.
    Quat c = q.w() < 0 ? Quat(-q.coeffs()) : q;
    return 2.0 * c.vec();
  }
  return aa.axis * aa.angle;
}

RigidTransform::RigidTransform(const Quat& rotation, const Vec3& translation)
    : rotation_(normalized_or_throw(rotation)), translation_(translation) {}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : RigidTransform(Quat(rotation), translation) {}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  return RigidTransform(Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>()));
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Quat inv = rotation_.conjugate();
  return RigidTransform(inv, -(inv * translation_));
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  return RigidTransform(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }

RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

double geodesic_angle(const Quat& r1, const Quat& r2) {
  const Quat d = r1.conjugate() * r2;
  // atan2 form stays accurate near 0 and pi, unlike acos of w.
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

AxisAngle to_axis_angle(const Quat& r) {
  Quat q = r.w() < 0 ? Quat(-r.coeffs()) : r;
  const double s = q.vec().norm();
  AxisAngle out;
  out.angle = 2.0 * std::atan2(s, q.w());
  if (out.angle <= 1e-9) {
    out.axis = Vec3::UnitX();
    return out;
  }
  out.axis = q.vec() / s;
  return out;
}

RigidTransform interpolate(const RigidTransform& a, const RigidTransform& b, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "interpolation alpha must lie in [0, 1]");
  }
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  const Quat& qa = a.rotation();
  Quat qb = b.rotation();
  double dot = qa.dot(qb);
  if (dot < 0.0) {
    qb = Quat(-qb.coeffs());
    dot = -dot;
  }
  Quat q;
  if (dot > 1.0 - 1e-12) {
    q = Quat((1.0 - alpha) * qa.coeffs() + alpha * qb.coeffs());
  } else {
    const double theta = std::acos(std::clamp(dot, -1.0, 1.0));
    const double s = std::sin(theta);
    const double wa = std::sin((1.0 - alpha) * theta) / s;
    const double wb = std::sin(alpha * theta) / s;
    q = Quat(wa * qa.coeffs() + wb * qb.coeffs());
  }
  const Vec3 t = (1.0 - alpha) * a.translation() + alpha * b.translation();
  return RigidTransform(q, t);
}

PoseDelta pose_delta(const RigidTransform& a, const RigidTransform& b) {
  return {(a.translation() - b.translation()).norm(), geodesic_angle(a.rotation(), b.rotation())};
}

}  // namespace insideout
