#include "insideout/optics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <unsupported/Eigen/AutoDiff>

#include "insideout/error.hpp"

namespace insideout {

namespace {

constexpr int kMaxUndistortIterations = 20;
constexpr double kUndistortTolerance = 1e-10;

// Projection parameterized by scalar type so calibration can differentiate it.
// intr = (fx, fy, cx, cy, k1, k2).
template <typename T>
Eigen::Matrix<T, 2, 1> project_generic(const T* intr, const Eigen::Matrix<T, 3, 1>& p) {
  const T x = p(0) / p(2);
  const T y = p(1) / p(2);
  const T r2 = x * x + y * y;
  const T f = T(1.0) + intr[4] * r2 + intr[5] * r2 * r2;
  return {intr[0] * x * f + intr[2], intr[1] * y * f + intr[3]};
}

// Rodrigues rotation of p by rotation vector w.
template <typename T>
Eigen::Matrix<T, 3, 1> rotate_generic(const Eigen::Matrix<T, 3, 1>& w,
                                      const Eigen::Matrix<T, 3, 1>& p) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = w.squaredNorm();
  if (theta2 < T(1e-16)) {
    return p + w.cross(p);
  }
  const T theta = sqrt(theta2);
  const Eigen::Matrix<T, 3, 1> k = w / theta;
  const T c = cos(theta);
  const T s = sin(theta);
  return p * c + k.cross(p) * s + k * (k.dot(p) * (T(1.0) - c));
}

Mat3 normalization_transform(std::span<const Vec2> pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
  Mat3 t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

bool collinear(std::span<const Vec2> pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double hi = es.eigenvalues()(1);
  return !(hi > 0.0) || es.eigenvalues()(0) <= 1e-12 * hi;
}

Eigen::Matrix<double, 6, 1> zhang_row(const Mat3& h, int i, int j) {
  Eigen::Matrix<double, 6, 1> v;
  v << h(0, i) * h(0, j), h(0, i) * h(1, j) + h(1, i) * h(0, j), h(1, i) * h(1, j),
      h(2, i) * h(0, j) + h(0, i) * h(2, j), h(2, i) * h(1, j) + h(1, i) * h(2, j),
      h(2, i) * h(2, j);
  return v;
}

Mat3 camera_matrix(const CameraIntrinsics& c) {
  Mat3 k;
  k << c.fx, 0, c.cx, 0, c.fy, c.cy, 0, 0, 1;
  return k;
}

RigidTransform pose_from_homography(const Mat3& k, const Mat3& h) {
  const Mat3 kinv = k.inverse();
  const Vec3 a1 = kinv * h.col(0);
  const Vec3 a2 = kinv * h.col(1);
  const Vec3 a3 = kinv * h.col(2);
  double lambda = 1.0 / a1.norm();
  if (a3.z() * lambda < 0.0) lambda = -lambda;  // target in front of camera
  Mat3 r;
  r.col(0) = lambda * a1;
  r.col(1) = lambda * a2;
  r.col(2) = r.col(0).cross(r.col(1));
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 ro = svd.matrixU() * svd.matrixV().transpose();
  if (ro.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    ro = u * svd.matrixV().transpose();
  }
  return RigidTransform(ro, lambda * a3);
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  if (width <= 0 || height <= 0) fail(ErrorCode::kInvalidArgument, "image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    fail(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

void StereoRig::validate() const {
  left.validate();
  right.validate();
  if (!(baseline_mm() > 0.0)) fail(ErrorCode::kInvalidArgument, "stereo baseline must be positive");
}

StereoRig StereoRig::rectified(const CameraIntrinsics& cam, double baseline_mm) {
  return {cam, cam, RigidTransform::from_translation(Vec3(baseline_mm, 0.0, 0.0))};
}

Vec2 distort_normalized(const CameraIntrinsics& cam, const Vec2& xy) {
  const double r2 = xy.squaredNorm();
  return xy * (1.0 + cam.k1 * r2 + cam.k2 * r2 * r2);
}

Vec2 undistort_normalized(const CameraIntrinsics& cam, const Vec2& xy_d) {
  const double rd = xy_d.norm();
  if (rd == 0.0 || (cam.k1 == 0.0 && cam.k2 == 0.0)) return xy_d;
  // Solve ru * (1 + k1 ru^2 + k2 ru^4) = rd for the undistorted radius.
  double ru = rd;
  for (int it = 0; it < kMaxUndistortIterations; ++it) {
    const double ru2 = ru * ru;
    const double g = ru * (1.0 + cam.k1 * ru2 + cam.k2 * ru2 * ru2) - rd;
    const double dg = 1.0 + 3.0 * cam.k1 * ru2 + 5.0 * cam.k2 * ru2 * ru2;
    if (!(dg > 0.0)) break;  // outside the monotone region of the model
    const double step = g / dg;
    ru -= step;
    if (std::abs(step) < kUndistortTolerance) {
      return xy_d * (ru / rd);
    }
  }
  fail(ErrorCode::kNoConvergence, "radial distortion inversion did not converge");
}

Vec2 project(const CameraIntrinsics& cam, const Vec3& p) { return project(cam, p, nullptr); }

Vec2 project(const CameraIntrinsics& cam, const Vec3& p, ProjectionJacobian* jacobian) {
  if (!(p.z() > 1e-9)) fail(ErrorCode::kBehindCamera, "point at or behind the camera plane");
  const double iz = 1.0 / p.z();
  const double x = p.x() * iz;
  const double y = p.y() * iz;
  const double r2 = x * x + y * y;
  const double f = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2;
  if (jacobian != nullptr) {
    const double df = cam.k1 + 2.0 * cam.k2 * r2;  // d f / d r2
    Eigen::Matrix2d d_uv_d_xy;
    d_uv_d_xy << cam.fx * (f + 2.0 * x * x * df), cam.fx * 2.0 * x * y * df,
        cam.fy * 2.0 * x * y * df, cam.fy * (f + 2.0 * y * y * df);
    Eigen::Matrix<double, 2, 3> d_xy_d_p;
    d_xy_d_p << iz, 0.0, -x * iz, 0.0, iz, -y * iz;
    *jacobian = d_uv_d_xy * d_xy_d_p;
  }
  return {cam.fx * x * f + cam.cx, cam.fy * y * f + cam.cy};
}

Vec3 unproject(const CameraIntrinsics& cam, const Vec2& pixel) {
  const Vec2 xd((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy);
  const Vec2 xu = undistort_normalized(cam, xd);
  return Vec3(xu.x(), xu.y(), 1.0).normalized();
}

Vec3 triangulate(const StereoRig& rig, const Vec2& px_left, const Vec2& px_right) {
  const Vec3 d1 = unproject(rig.left, px_left);
  const Vec3 d2 = rig.t_left_right.rotation() * unproject(rig.right, px_right);
  const Vec3 o2 = rig.t_left_right.translation();
  const double b = d1.dot(d2);
  const double denom = 1.0 - b * b;
  if (d1.cross(d2).norm() < 1e-6) {
    fail(ErrorCode::kDegenerateGeometry, "viewing rays are parallel");
  }
  const Vec3 w0 = -o2;
  const double d = d1.dot(w0);
  const double e = d2.dot(w0);
  const double s = (b * e - d) / denom;
  const double u = (e - b * d) / denom;
  if (!(s > 0.0) || !(u > 0.0)) {
    fail(ErrorCode::kBehindCamera, "triangulated point lies behind a camera");
  }
  return 0.5 * (s * d1 + (o2 + u * d2));
}

Mat3 estimate_homography(const PlanarView& view) {
  const auto n = view.grid_points.size();
  if (n != view.image_points.size()) {
    fail(ErrorCode::kInvalidArgument, "grid and image point counts differ");
  }
  if (n < 4) fail(ErrorCode::kInsufficientData, "homography needs at least 4 correspondences");
  if (collinear(view.grid_points) || collinear(view.image_points)) {
    fail(ErrorCode::kDegenerateGeometry, "correspondences are collinear");
  }
  const Mat3 tg = normalization_transform(view.grid_points);
  const Mat3 ti = normalization_transform(view.image_points);
  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 g = tg * view.grid_points[i].homogeneous();
    const Vec3 m = ti * view.image_points[i].homogeneous();
    const double X = g.x(), Y = g.y(), u = m.x(), v = m.y();
    a.row(2 * i) << -X, -Y, -1, 0, 0, 0, u * X, u * Y, u;
    a.row(2 * i + 1) << 0, 0, 0, -X, -Y, -1, v * X, v * Y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (a.rows() >= 9 && sv(7) <= 1e-12 * sv(0)) {
    fail(ErrorCode::kDegenerateGeometry, "homography design matrix is rank deficient");
  }
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 out = ti.inverse() * hn * tg;
  out /= out.norm();
  if (out(2, 2) < 0.0) out = -out;
  return out;
}

CameraIntrinsics closed_form_intrinsics(std::span<const Mat3> homographies, int width, int height,
                                        double degeneracy_ratio) {
  // Precondition so that pixel magnitudes are O(1).
  const double s = 0.5 * (width + height);
  Mat3 norm;
  norm << 1.0 / s, 0, -0.5 * width / s, 0, 1.0 / s, -0.5 * height / s, 0, 0, 1;

  const auto n = homographies.size();
  Eigen::MatrixXd v(2 * n + 1, 6);
  for (std::size_t i = 0; i < n; ++i) {
    Mat3 h = norm * homographies[i];
    h /= h.norm();
    v.row(2 * i) = zhang_row(h, 0, 1).transpose();
    v.row(2 * i + 1) = (zhang_row(h, 0, 0) - zhang_row(h, 1, 1)).transpose();
  }
  v.row(2 * n) << 0, 1, 0, 0, 0, 0;  // zero skew

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 6 || sv(4) <= degeneracy_ratio * sv(0)) {
    fail(ErrorCode::kDegenerateGeometry, "view orientations do not constrain the intrinsics");
  }
  Eigen::Matrix<double, 6, 1> b = svd.matrixV().col(5);
  if (b(0) < 0) b = -b;
  const double b11 = b(0), b12 = b(1), b22 = b(2), b13 = b(3), b23 = b(4), b33 = b(5);
  const double den = b11 * b22 - b12 * b12;
  const double v0 = (b12 * b13 - b11 * b23) / den;
  const double lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
  const double alpha2 = lambda / b11;
  const double beta2 = lambda * b11 / den;
  if (!(alpha2 > 0.0) || !(beta2 > 0.0)) {
    fail(ErrorCode::kDegenerateGeometry, "closed-form intrinsics are not positive definite");
  }
  const double alpha = std::sqrt(alpha2);
  const double u0 = -b13 * alpha2 / lambda;

  // Undo the preconditioning: K = norm^-1 * K'.
  CameraIntrinsics cam;
  cam.width = width;
  cam.height = height;
  cam.fx = alpha * s;
  cam.fy = std::sqrt(beta2) * s;
  cam.cx = u0 * s + 0.5 * width;
  cam.cy = v0 * s + 0.5 * height;
  return cam;
}

CalibrationResult calibrate_intrinsics(std::span<const PlanarView> views, int width, int height,
                                       const CalibrationOptions& options) {
  if (views.size() < 3) {
    fail(ErrorCode::kInsufficientData,
         "intrinsic calibration needs at least 3 views, got " + std::to_string(views.size()));
  }
  std::vector<Mat3> homographies;
  homographies.reserve(views.size());
  for (const auto& v : views) homographies.push_back(estimate_homography(v));

  CameraIntrinsics cam = closed_form_intrinsics(homographies, width, height, options.degeneracy_ratio);
  const Mat3 k = camera_matrix(cam);

  const int nv = static_cast<int>(views.size());
  const int np = 6 + 6 * nv;
  Eigen::VectorXd x(np);
  x << cam.fx, cam.fy, cam.cx, cam.cy, 0.0, 0.0;
  for (int i = 0; i < nv; ++i) {
    const RigidTransform pose = pose_from_homography(k, homographies[i]);
    x.segment<3>(6 + 6 * i) = rotation_to_vector(pose.rotation());
    x.segment<3>(9 + 6 * i) = pose.translation();
  }

  using Deriv = Eigen::Matrix<double, 12, 1>;
  using AD = Eigen::AutoDiffScalar<Deriv>;

  // Accumulates normal equations; returns the cost (sum of squared residuals).
  auto build = [&](const Eigen::VectorXd& params, Eigen::MatrixXd* jtj, Eigen::VectorXd* jtr) {
    double cost = 0.0;
    if (jtj != nullptr) {
      jtj->setZero(np, np);
      jtr->setZero(np);
    }
    for (int i = 0; i < nv; ++i) {
      const int off = 6 + 6 * i;
      const auto& view = views[i];
      if (jtj == nullptr) {
        const Vec3 w = params.segment<3>(off);
        const Vec3 t = params.segment<3>(off + 3);
        for (std::size_t j = 0; j < view.grid_points.size(); ++j) {
          const Vec3 pg(view.grid_points[j].x(), view.grid_points[j].y(), 0.0);
          const Vec3 pc = rotate_generic<double>(w, pg) + t;
          if (!(pc.z() > 1e-9)) return std::numeric_limits<double>::infinity();
          const Vec2 r = project_generic<double>(params.data(), pc) - view.image_points[j];
          cost += r.squaredNorm();
        }
        continue;
      }
      AD intr[6];
      for (int q = 0; q < 6; ++q) intr[q] = AD(params(q), 12, q);
      Eigen::Matrix<AD, 3, 1> w, t;
      for (int q = 0; q < 3; ++q) {
        w(q) = AD(params(off + q), 12, 6 + q);
        t(q) = AD(params(off + 3 + q), 12, 9 + q);
      }
      Eigen::Matrix<double, 12, 12> h = Eigen::Matrix<double, 12, 12>::Zero();
      Deriv g = Deriv::Zero();
      for (std::size_t j = 0; j < view.grid_points.size(); ++j) {
        Eigen::Matrix<AD, 3, 1> pg;
        pg << AD(view.grid_points[j].x()), AD(view.grid_points[j].y()), AD(0.0);
        const Eigen::Matrix<AD, 3, 1> pc = rotate_generic<AD>(w, pg) + t;
        const Eigen::Matrix<AD, 2, 1> uv = project_generic<AD>(intr, pc);
        for (int c = 0; c < 2; ++c) {
          const double r = uv(c).value() - view.image_points[j](c);
          const Deriv& jr = uv(c).derivatives();
          h.noalias() += jr * jr.transpose();
          g.noalias() += jr * r;
          cost += r * r;
        }
      }
      // Scatter the 12-parameter block into the global system.
      int idx[12];
      for (int q = 0; q < 6; ++q) idx[q] = q;
      for (int q = 0; q < 6; ++q) idx[6 + q] = off + q;
      for (int a = 0; a < 12; ++a) {
        (*jtr)(idx[a]) += g(a);
        for (int c = 0; c < 12; ++c) (*jtj)(idx[a], idx[c]) += h(a, c);
      }
    }
    return cost;
  };

  Eigen::MatrixXd jtj;
  Eigen::VectorXd jtr;
  double cost = build(x, &jtj, &jtr);
  double mu = 1e-3;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    Eigen::MatrixXd a = jtj;
    a.diagonal() += mu * jtj.diagonal();
    const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
    if (!delta.allFinite()) break;
    const Eigen::VectorXd xn = x + delta;
    const double cn = build(xn, nullptr, nullptr);
    if (cn < cost) {
      const double rel_drop = (cost - cn) / std::max(cost, 1e-300);
      x = xn;
      cost = build(x, &jtj, &jtr);
      mu = std::max(mu * 0.1, 1e-12);
      if (delta.norm() < 1e-12 * (x.norm() + 1e-12) || rel_drop < 1e-15) break;
    } else {
      mu *= 10.0;
      if (mu > 1e12) break;
    }
  }

  std::size_t total = 0;
  for (const auto& v : views) total += v.grid_points.size();

  CalibrationResult out;
  out.intrinsics = cam;
  out.intrinsics.fx = x(0);
  out.intrinsics.fy = x(1);
  out.intrinsics.cx = x(2);
  out.intrinsics.cy = x(3);
  out.intrinsics.k1 = x(4);
  out.intrinsics.k2 = x(5);
  out.rms_px = std::sqrt(cost / static_cast<double>(2 * total));
  out.iterations = it;
  for (int i = 0; i < nv; ++i) {
    out.view_poses.emplace_back(rotation_from_vector(x.segment<3>(6 + 6 * i)),
                                Vec3(x.segment<3>(9 + 6 * i)));
  }
  return out;
}

}  // namespace insideout
