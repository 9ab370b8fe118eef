#include "insideout/register.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "insideout/error.hpp"

namespace insideout {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Modified Rodrigues vector 2·sin(θ/2)·n, i.e. twice the quaternion vector part
// with w >= 0.
Vec3 tsai_vector(const Quat& q) {
  const Quat c = q.w() < 0 ? Quat(-q.coeffs()) : q;
  return 2.0 * c.vec();
}

Mat3 rotation_from_tsai(const Vec3& p) {
  const double n2 = p.squaredNorm();
  return (1.0 - 0.5 * n2) * Mat3::Identity() +
         0.5 * (p * p.transpose() + std::sqrt(std::max(0.0, 4.0 - n2)) * skew(p));
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorCode::kInvalidArgument, "pose sequences differ in length");
  if (a < 2) fail(ErrorCode::kInsufficientData, "need at least two poses to form a motion");
}

}  // namespace

std::vector<MotionPair> eye_on_hand_motions(std::span<const RigidTransform> flange_in_base,
                                            std::span<const RigidTransform> camera_in_world) {
  check_lengths(flange_in_base.size(), camera_in_world.size());
  std::vector<MotionPair> out;
  for (std::size_t i = 0; i + 1 < flange_in_base.size(); ++i) {
    out.push_back({flange_in_base[i].inverse() * flange_in_base[i + 1],
                   camera_in_world[i].inverse() * camera_in_world[i + 1]});
  }
  return out;
}

std::vector<MotionPair> eye_on_base_motions(std::span<const RigidTransform> flange_in_base,
                                            std::span<const RigidTransform> marker_in_tracker) {
  check_lengths(flange_in_base.size(), marker_in_tracker.size());
  std::vector<MotionPair> out;
  for (std::size_t i = 0; i + 1 < flange_in_base.size(); ++i) {
    out.push_back({flange_in_base[i + 1] * flange_in_base[i].inverse(),
                   marker_in_tracker[i + 1] * marker_in_tracker[i].inverse()});
  }
  return out;
}

HandEyeResult hand_eye_tsai_lenz(std::span<const MotionPair> pairs, const HandEyeOptions& options) {
  if (pairs.size() < 2) {
    fail(ErrorCode::kInsufficientData,
         "hand-eye calibration needs at least 2 motion pairs, got " + std::to_string(pairs.size()));
  }
  const double min_angle = deg_to_rad(options.min_rotation_deg);
  std::vector<const MotionPair*> used;
  for (const auto& p : pairs) {
    const double ang_a = to_axis_angle(p.a.rotation()).angle;
    const double ang_b = to_axis_angle(p.b.rotation()).angle;
    if (ang_a >= min_angle && ang_b >= min_angle) used.push_back(&p);
  }
  HandEyeResult out;
  out.pairs_used = static_cast<int>(used.size());
  out.pairs_discarded = static_cast<int>(pairs.size() - used.size());
  if (used.size() < 2) {
    fail(ErrorCode::kInsufficientData,
         "fewer than 2 motion pairs exceed the minimum rotation of " +
             std::to_string(options.min_rotation_deg) + " deg");
  }

  // Rotation axes must span more than one direction.
  bool spread = false;
  const Vec3 axis0 = to_axis_angle(used.front()->a.rotation()).axis;
  for (const auto* p : used) {
    if (axis0.cross(to_axis_angle(p->a.rotation()).axis).norm() > options.parallel_axis_tolerance_rad) {
      spread = true;
      break;
    }
  }
  if (!spread) fail(ErrorCode::kUnobservable, "all motion rotation axes are parallel");

  const auto n = used.size();
  Eigen::MatrixXd m(3 * n, 3);
  Eigen::VectorXd rhs(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 pa = tsai_vector(used[i]->a.rotation());
    const Vec3 pb = tsai_vector(used[i]->b.rotation());
    m.block<3, 3>(3 * i, 0) = skew(pa + pb);
    rhs.segment<3>(3 * i) = pb - pa;
  }
  const Vec3 p_prime = m.colPivHouseholderQr().solve(rhs);
  const Vec3 p = 2.0 * p_prime / std::sqrt(1.0 + p_prime.squaredNorm());
  const Mat3 rx = rotation_from_tsai(p);

  Eigen::MatrixXd mt(3 * n, 3);
  Eigen::VectorXd rt(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    mt.block<3, 3>(3 * i, 0) = used[i]->a.rotation_matrix() - Mat3::Identity();
    rt.segment<3>(3 * i) = rx * used[i]->b.translation() - used[i]->a.translation();
  }
  const Vec3 tx = mt.colPivHouseholderQr().solve(rt);
  out.x = RigidTransform(rx, tx);

  double rot_sq = 0.0;
  double trans_sq = 0.0;
  for (const auto* pr : used) {
    const RigidTransform lhs = pr->a * out.x;
    const RigidTransform rhs_t = out.x * pr->b;
    const double ang = rad_to_deg(geodesic_angle(lhs.rotation(), rhs_t.rotation()));
    rot_sq += ang * ang;
    trans_sq += (lhs.translation() - rhs_t.translation()).squaredNorm();
  }
  out.rotation_residual_deg = std::sqrt(rot_sq / static_cast<double>(n));
  out.translation_residual_mm = std::sqrt(trans_sq / static_cast<double>(n));
  return out;
}

HandEyeResult hand_eye_eye_on_base(std::span<const MotionPair> pairs, const HandEyeOptions& options) {
  return hand_eye_tsai_lenz(pairs, options);
}

RegistrationResult rigid_register(std::span<const PointCorrespondence> points) {
  const auto n = points.size();
  if (n < 3) fail(ErrorCode::kInsufficientData, "rigid registration needs at least 3 points");
  Vec3 mp = Vec3::Zero();
  Vec3 mq = Vec3::Zero();
  for (const auto& c : points) {
    mp += c.p;
    mq += c.q;
  }
  mp /= static_cast<double>(n);
  mq /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  Mat3 spread_p = Mat3::Zero();
  for (const auto& c : points) {
    cov += (c.q - mq) * (c.p - mp).transpose();
    spread_p += (c.p - mp) * (c.p - mp).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(spread_p);
  const auto& ev = es.eigenvalues();
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    fail(ErrorCode::kDegenerateGeometry, "registration points are collinear");
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  RegistrationResult out;
  out.transform = RigidTransform(r, mq - r * mp);
  double sq = 0.0;
  for (const auto& c : points) sq += (out.transform.apply(c.p) - c.q).squaredNorm();
  out.fre = std::sqrt(sq / static_cast<double>(n));
  return out;
}

RegistrationResult us_calibrate(const UsCalibrationInput& input) {
  const auto n = input.stylus_tips.size();
  if (input.image_points.size() != n || input.probe_poses.size() != n) {
    fail(ErrorCode::kInvalidArgument, "US calibration inputs differ in length");
  }
  if (!(input.pixel_spacing.x() > 0.0) || !(input.pixel_spacing.y() > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "pixel spacing must be positive");
  }
  std::vector<PointCorrespondence> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 plane(input.image_points[i].x() * input.pixel_spacing.x(),
                     input.image_points[i].y() * input.pixel_spacing.y(), 0.0);
    pts.push_back({plane, input.probe_poses[i].apply_inverse(input.stylus_tips[i])});
  }
  return rigid_register(pts);
}

}  // namespace insideout
