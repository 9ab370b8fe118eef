#pragma once

// Synthetic operating room: landmark scenes, ground-truth robot
// trajectories, stereo feature rendering, an outside-in tracker, and
// B-mode frames of a ball phantom.

#include <cstdint>
#include <span>
#include <vector>

#include "insideout/optics.hpp"
#include "insideout/register.hpp"
#include "insideout/usfuse.hpp"
#include "insideout/vostereo.hpp"
#include "insideout/xform.hpp"

namespace insideout {

/// Deterministic per-item seed from a master seed and an index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct SceneLandmark {
  std::uint64_t id = 0;
  Vec3 position = Vec3::Zero();  // robot base frame, mm
};

struct Scene {
  std::vector<SceneLandmark> landmarks;
  Vec3 bounds_min = Vec3::Zero();
  Vec3 bounds_max = Vec3::Zero();
  std::uint64_t seed = 0;
};

struct SceneOptions {
  double wall_fraction = 0.4;  // remainder goes to clutter clusters
  int clutter_clusters = 16;
  double cluster_radius_mm = 300.0;
  /// No clutter is placed within this radius of keepout_center (the
  /// working volume of the tracked tool).
  Vec3 keepout_center{0.0, 0.0, 1000.0};
  double keepout_radius_mm = 700.0;
};

/// Landmarks on the walls of the box and in clutter clusters inside it.
Scene generate_scene(std::uint64_t seed, const Vec3& bounds_min, const Vec3& bounds_max, int n_landmarks,
                     const SceneOptions& options = {});

/// Static transforms of the tool mount and room (see RigSetup::defaults()).
struct RigSetup {
  RigidTransform t_ee_rgb;      // RGB camera in the end-effector frame
  RigidTransform t_rgb_stereo;  // left stereo camera in the RGB frame
  RigidTransform t_rb_ots;      // outside-in tracker in the robot base
  RigidTransform t_ee_marker;   // optical marker in the end-effector frame
  RigidTransform t_rgb_us;      // US image plane in the RGB frame

  static RigidTransform default_us_plane();
  static RigidTransform default_rgb_in_ee();
  static RigidTransform default_stereo_in_rgb();
  static RigidTransform default_tracker_in_base();
  static RigidTransform default_marker_in_ee();

  static RigSetup defaults();
};

struct NoiseModel {
  double pixel_sigma = 0.3;
  double detection_prob = 1.0;
  double id_corruption_prob = 0.0;
  double ots_trans_sigma = 0.15;  // mm, per axis
  double ots_rot_sigma = 0.08;    // deg, per axis of the rotation vector
  double ots_latency = 0.030;     // s
  double ots_rate = 20.0;         // Hz

  void validate() const;
  static NoiseModel noiseless();
};

enum class TrajectoryKind { kSweep, kRotationOnly, kFreehand };

struct TrajectoryOptions {
  Vec3 pivot{0.0, 0.0, 1000.0};
  /// Flange orientation at rest; default looks along +y with image "down" = −z.
  Quat base_orientation = default_base_orientation();
  double sweep_extent_mm = 1000.0;  // peak-to-peak along x
  double sweep_period_s = 20.0;
  double sweep_phase_deg = 0.0;  // phase of the x sweep at t = 0
  double fan_deg = 15.0;
  double pan_deg = 40.0;
  double pan_period_s = 12.0;
  double tilt_jitter_deg = 3.0;
  double jitter_mm = 20.0;
  double freehand_translation_mm = 150.0;
  double freehand_rotation_deg = 20.0;
  double waypoint_interval_s = 1.5;

  static Quat default_base_orientation();
};

/// Flange-in-base ground truth, C¹ through seeded waypoints. Sample i sits at
/// i / rate seconds; the count is round(duration · rate).
TimedPoseStream generate_trajectory(TrajectoryKind kind, double duration_s, double rate_hz, std::uint64_t seed,
                                    const TrajectoryOptions& options = {});

struct RenderOptions {
  double min_range_mm = 200.0;
  double max_range_mm = 6000.0;
};

struct RenderedFrame {
  std::vector<FeatureObservation> observations;
  std::vector<bool> is_outlier;           // id was corrupted
  std::vector<std::uint64_t> true_ids;
};

/// Projects scene landmarks in range and inside the left image; adds pixel
/// noise, detection dropout and id corruption. The right pixel is present
/// only when the landmark is also visible to the right camera.
RenderedFrame render_stereo_frame(const Scene& scene, const RigidTransform& camera_pose_world,
                                  const StereoRig& rig, const NoiseModel& noise, std::uint64_t seed,
                                  const RenderOptions& options = {});

/// Outside-in tracker: marker pose in tracker frame resampled at ots_rate,
/// timestamps delayed by ots_latency, perturbed by translation and rotation noise.
TimedPoseStream simulate_ots(const TimedPoseStream& flange_in_base, const RigSetup& rig_setup,
                             const NoiseModel& noise, std::uint64_t seed);

struct SpherePhantom {
  Vec3 center = Vec3::Zero();  // world, mm
  double radius = 20.0;
  double inside = 200.0;
  double outside = 40.0;
  double band_mm = 1.0;
  double speckle_sigma = 0.0;  // relative, multiplicative
};

struct UsImageSpec {
  int width = 128;
  int height = 128;
  Vec2 spacing{0.5, 0.5};
};

/// B-mode frame of the phantom seen through T^W_US = probe_pose_world · t_rgb_us.
UsImage render_us_frame(const SpherePhantom& phantom, const RigidTransform& probe_pose_world,
                        const RigidTransform& t_rgb_us, const UsImageSpec& spec, std::uint64_t seed);

struct PlanarTargetOptions {
  int cols = 9;
  int rows = 7;
  double pitch_mm = 25.0;
  double min_distance_mm = 400.0;
  double max_distance_mm = 650.0;
  double max_tilt_deg = 40.0;
};

/// Views of a planar grid from random poses with the whole grid in the
/// image, pixels perturbed by pixel_sigma. Optional true target poses.
std::vector<PlanarView> simulate_planar_views(const CameraIntrinsics& cam, int n_views, double pixel_sigma,
                                              std::uint64_t seed, const PlanarTargetOptions& options = {},
                                              std::vector<RigidTransform>* target_in_camera = nullptr);

/// Stylus-tip US calibration problem for a known image-plane-to-probe
/// transform: random probe poses and image points, tips in the tracker frame.
UsCalibrationInput simulate_us_points(const RigidTransform& probe_from_image, const UsImageSpec& image,
                                      int n_points, double tip_sigma_mm, double pixel_sigma,
                                      std::uint64_t seed);

}  // namespace insideout
