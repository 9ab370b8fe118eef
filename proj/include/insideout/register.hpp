#pragma once

// Offline calibration solvers: Tsai-Lenz hand-eye (eye-on-hand and
// eye-on-base) and SVD point registration used for stylus US calibration.

#include <span>
#include <vector>

#include "insideout/xform.hpp"

namespace insideout {

/// One AX = XB constraint: `a` is the robot-side relative motion, `b` the
/// sensor-side relative motion over the same interval.
struct MotionPair {
  RigidTransform a;
  RigidTransform b;
};

struct PointCorrespondence {
  Vec3 p;  // frame P
  Vec3 q;  // frame Q
};

struct HandEyeOptions {
  /// Pairs whose robot or sensor rotation is below this angle are discarded.
  double min_rotation_deg = 5.0;
  /// Rotation axes closer than this are treated as parallel.
  double parallel_axis_tolerance_rad = 1e-3;
};

struct HandEyeResult {
  RigidTransform x;
  double rotation_residual_deg = 0.0;    // RMS geodesic angle of A·X vs X·B
  double translation_residual_mm = 0.0;  // RMS translation difference of A·X vs X·B
  int pairs_used = 0;
  int pairs_discarded = 0;
};

/// Eye-on-hand motions from absolute poses: A_i = E_i⁻¹E_{i+1} for the robot
/// flange in its base, B_i = C_i⁻¹C_{i+1} for the camera in its own world.
std::vector<MotionPair> eye_on_hand_motions(std::span<const RigidTransform> flange_in_base,
                                            std::span<const RigidTransform> camera_in_world);

/// Eye-on-base motions: A_i = E_{i+1}E_i⁻¹ for the flange in the robot base,
/// B_i = M_{i+1}M_i⁻¹ for the flange-mounted marker in the external tracker.
/// Solving AX = XB on these yields the tracker pose in the robot base.
std::vector<MotionPair> eye_on_base_motions(std::span<const RigidTransform> flange_in_base,
                                            std::span<const RigidTransform> marker_in_tracker);

/// Solves AᵢX = XBᵢ: rotation from the modified-Rodrigues linear system,
/// translation from the stacked (Rₐ − I)t = R·t_b − t_a system.
HandEyeResult hand_eye_tsai_lenz(std::span<const MotionPair> pairs, const HandEyeOptions& options = {});

/// Same solver; expects pairs built by eye_on_base_motions.
HandEyeResult hand_eye_eye_on_base(std::span<const MotionPair> pairs, const HandEyeOptions& options = {});

struct RegistrationResult {
  RigidTransform transform;  // maps P into Q
  double fre = 0.0;          // RMS residual, mm
};

/// Least-squares rigid fit of q ≈ T·p via SVD of the cross-covariance with
/// reflection correction.
RegistrationResult rigid_register(std::span<const PointCorrespondence> points);

struct UsCalibrationInput {
  std::vector<Vec3> stylus_tips;         // tracker/world frame, mm
  std::vector<Vec2> image_points;        // US pixels
  Vec2 pixel_spacing{1.0, 1.0};          // mm per pixel (sx, sy)
  std::vector<RigidTransform> probe_poses;  // sensor pose in tracker/world frame
};

/// Static transform from the US image plane to the probe-mounted sensor.
RegistrationResult us_calibrate(const UsCalibrationInput& input);

}  // namespace insideout
