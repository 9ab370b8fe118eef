#pragma once

// Pinhole camera with two radial distortion coefficients, stereo rig
// geometry, triangulation, and planar-target intrinsic calibration.

#include <optional>
#include <span>
#include <vector>

#include "insideout/xform.hpp"

namespace insideout {

struct CameraIntrinsics {
  double fx = 615.0;
  double fy = 615.0;
  double cx = 320.0;
  double cy = 240.0;
  double k1 = 0.0;
  double k2 = 0.0;
  int width = 640;
  int height = 480;

  /// Throws kInvalidArgument if focal lengths or principal point are out of range.
  void validate() const;
  bool in_image(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
  }
};

struct StereoRig {
  CameraIntrinsics left;
  CameraIntrinsics right;
  RigidTransform t_left_right;  // right camera pose in the left camera frame

  double baseline_mm() const { return t_left_right.translation().norm(); }
  void validate() const;

  /// Rectified rig with identical cameras, right camera at +x baseline.
  static StereoRig rectified(const CameraIntrinsics& cam, double baseline_mm);
};

struct PlanarView {
  std::vector<Vec2> grid_points;   // mm on the z = 0 target plane
  std::vector<Vec2> image_points;  // detected pixels
};

using ProjectionJacobian = Eigen::Matrix<double, 2, 3>;

/// Normalized (x/z, y/z) coordinates through the radial model.
Vec2 distort_normalized(const CameraIntrinsics& cam, const Vec2& undistorted);
/// Inverse of distort_normalized. Throws kNoConvergence when the radial
/// inversion does not settle within 20 Newton steps.
Vec2 undistort_normalized(const CameraIntrinsics& cam, const Vec2& distorted);

/// Camera-frame point (mm) to pixel. Throws kBehindCamera when z <= 1e-9.
Vec2 project(const CameraIntrinsics& cam, const Vec3& point_cam);
/// Same, additionally writing d(pixel)/d(point_cam).
Vec2 project(const CameraIntrinsics& cam, const Vec3& point_cam, ProjectionJacobian* jacobian);

/// Unit ray through `pixel` in the camera frame.
Vec3 unproject(const CameraIntrinsics& cam, const Vec2& pixel);

/// Midpoint of the common perpendicular of the two viewing rays, expressed in
/// the left camera frame.
Vec3 triangulate(const StereoRig& rig, const Vec2& px_left, const Vec2& px_right);

/// Normalized DLT homography mapping grid (mm) to image (px); ‖H‖_F = 1.
Mat3 estimate_homography(const PlanarView& view);

struct CalibrationOptions {
  int max_iterations = 200;
  /// Smallest acceptable ratio between the 5th and 1st singular value of
  /// the closed-form constraint matrix.
  double degeneracy_ratio = 1e-9;
};

struct CalibrationResult {
  CameraIntrinsics intrinsics;
  /// RMS over all pixel coordinates (u and v counted separately).
  double rms_px = 0.0;
  std::vector<RigidTransform> view_poses;  // target pose in camera frame
  int iterations = 0;
};

/// Closed-form intrinsics from homography constraints (zero skew), followed
/// by Levenberg-Marquardt refinement of fx, fy, cx, cy, k1, k2 and per-view
/// extrinsics on reprojection error.
CalibrationResult calibrate_intrinsics(std::span<const PlanarView> views, int width = 640,
                                       int height = 480, const CalibrationOptions& options = {});

/// Closed-form stage only, exposed for testing.
CameraIntrinsics closed_form_intrinsics(std::span<const Mat3> homographies, int width, int height,
                                        double degeneracy_ratio = 1e-9);

}  // namespace insideout
