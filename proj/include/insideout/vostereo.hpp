#pragma once

// Feature-based stereo visual odometry with a persistent landmark map.
// The world frame is the left camera frame of the first processed frame;
// scale is metric through the fixed stereo baseline.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "insideout/optics.hpp"
#include "insideout/usfuse.hpp"
#include "insideout/xform.hpp"

namespace insideout {

struct FeatureObservation {
  std::uint64_t feature_id = 0;
  Vec2 px_left = Vec2::Zero();
  std::optional<Vec2> px_right;
};

struct Landmark {
  std::uint64_t id = 0;
  Vec3 position_world = Vec3::Zero();
  int observation_count = 1;
  long last_seen_check = 0;
  int consecutive_outliers = 0;
  // Accumulated normal equations of every inlier sighting, linearized at the
  // estimate current when it was absorbed.
  Mat3 information = Mat3::Zero();
  Vec3 information_vector = Vec3::Zero();
};

struct KeyframeObservation {
  std::uint64_t id = 0;
  Vec2 px_left = Vec2::Zero();
  std::optional<Vec2> px_right;
};

struct Keyframe {
  double t = 0.0;
  RigidTransform pose;  // camera in world
  std::vector<KeyframeObservation> observations;
};

enum class TrackStatus { kTracking, kLost };

struct VoOptions {
  int min_init_landmarks = 50;
  double ransac_threshold_px = 2.0;
  int min_inliers = 10;
  int ransac_max_iterations = 200;
  double ransac_confidence = 0.999;
  int refine_max_iterations = 20;
  double refine_tolerance = 1e-10;
  double keyframe_tracked_fraction = 0.6;
  double keyframe_translation_mm = 100.0;
  double keyframe_rotation_deg = 10.0;
  int cull_window_checks = 50;
  int cull_min_observations = 3;
  /// Landmarks rejected by RANSAC this many frames in a row are dropped.
  int max_consecutive_outliers = 3;
  /// Stereo matches must reproject into both images within this error.
  double stereo_match_threshold_px = 2.0;
  double min_depth_mm = 100.0;
  double max_depth_mm = 10000.0;
  std::uint64_t seed = 0;
};

/// One 3D-2D stereo correspondence for pose estimation.
struct PnpCorrespondence {
  Vec3 landmark_world;
  Vec2 px_left;
  std::optional<Vec2> px_right;
};

struct RefineResult {
  RigidTransform pose;  // camera in world
  bool converged = false;
  int iterations = 0;
  double initial_rms = 0.0;
  double final_rms = 0.0;
};

/// Gauss-Newton on the 6-DoF camera pose minimizing squared stereo
/// reprojection error (left always, right when present). Stops when the
/// update norm drops below `tolerance` or after `max_iterations`. If the cost
/// rises on three consecutive steps, pose0 comes back with converged = false.
RefineResult refine_pose(const RigidTransform& pose0, std::span<const PnpCorrespondence> inliers,
                         const StereoRig& rig, int max_iterations = 20, double tolerance = 1e-10);

/// Residual vector (left u, v, then right u, v when present) and its
/// Jacobian w.r.t. a left-multiplied update (translation, rotation) of the
/// world-to-camera transform. Exposed for derivative checks.
void stereo_residual(const RigidTransform& camera_in_world, const PnpCorrespondence& c,
                     const StereoRig& rig, Eigen::VectorXd* residual,
                     Eigen::Matrix<double, Eigen::Dynamic, 6>* jacobian);

/// Stereo reprojection errors (px) of one correspondence; right is 0 when
/// absent. Returns false when the point falls behind either camera.
bool reprojection_errors(const RigidTransform& camera_in_world, const PnpCorrespondence& c,
                         const StereoRig& rig, double* err_left, double* err_right);

struct RansacResult {
  RigidTransform pose;  // camera in world
  std::vector<bool> inliers;
  int iterations = 0;
};

/// Robust pose from 3D-2D correspondences: 4-point hypotheses solved by
/// Gauss-Newton from `prior`, scored by stereo reprojection error, then
/// refined on the consensus set. Deterministic in `seed`.
RansacResult ransac_pnp(std::span<const PnpCorrespondence> correspondences, const StereoRig& rig,
                        const RigidTransform& prior, const VoOptions& options, std::uint64_t seed);

struct TrackResult {
  double t = 0.0;
  RigidTransform pose;  // last good pose when lost
  bool lost = false;
  int associations = 0;
  int inliers = 0;
  bool keyframe_inserted = false;
  int landmarks_added = 0;
  std::vector<std::size_t> inlier_observations;  // indices into the frame
};

struct KeyframeDecision {
  bool inserted = false;
  int landmarks_added = 0;
  int landmarks_culled = 0;
};

struct SessionStats {
  int frames = 0;
  int frames_lost = 0;
  std::size_t map_size = 0;
  std::size_t keyframes = 0;
  std::size_t landmarks_created = 0;
  double mean_inlier_ratio = 0.0;
};

class TrackSession {
 public:
  /// Triangulates every stereo-matched observation into the map; the first
  /// pose is the identity. Throws kInitFailure with too few stereo matches.
  static TrackSession init_map(const StereoRig& rig, std::span<const FeatureObservation> frame,
                               double t = 0.0, const VoOptions& options = {});

  /// Associates observations to landmarks by id, estimates the pose robustly
  /// and runs the keyframe policy. Losing track is not an error: status
  /// switches to kLost and later frames re-associate against the full map.
  TrackResult track_frame(std::span<const FeatureObservation> frame, double t);

  /// Inserts a keyframe when the tracked fraction against the last keyframe
  /// falls below the threshold or motion since it exceeds the translation or
  /// rotation limit; new stereo matches are then triangulated into the map.
  KeyframeDecision keyframe_policy(std::span<const FeatureObservation> frame,
                                   std::span<const std::size_t> inlier_observations, double t);

  const StereoRig& rig() const { return rig_; }
  const VoOptions& options() const { return options_; }
  const std::map<std::uint64_t, Landmark>& map() const { return map_; }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const RigidTransform& current_pose() const { return current_pose_; }
  TrackStatus status() const { return status_; }
  const TimedPoseStream& trajectory() const { return trajectory_; }
  SessionStats stats() const;

  /// Per-coordinate reprojection RMS (px) of each landmark over the keyframes
  /// observing it.
  std::map<std::uint64_t, double> landmark_reprojection_rms() const;

 private:
  TrackSession(const StereoRig& rig, const VoOptions& options)
      : rig_(rig), options_(options), trajectory_("vo") {}

  int triangulate_new(std::span<const FeatureObservation> frame, Keyframe& kf);
  // Folds one stereo sighting into the landmark and re-solves its position.
  void absorb_sighting(Landmark& lm, const RigidTransform& camera_in_world, const Vec2& px_left,
                       const std::optional<Vec2>& px_right) const;
  // Removes the landmark and its keyframe observations, so an id seen again
  // later starts from a fresh triangulation.
  std::map<std::uint64_t, Landmark>::iterator forget_landmark(std::map<std::uint64_t, Landmark>::iterator it);

  StereoRig rig_;
  VoOptions options_;
  std::map<std::uint64_t, Landmark> map_;
  std::vector<Keyframe> keyframes_;
  RigidTransform current_pose_;
  TrackStatus status_ = TrackStatus::kTracking;
  TimedPoseStream trajectory_;
  long check_index_ = 0;
  long frame_index_ = 0;
  int frames_lost_ = 0;
  std::size_t landmarks_created_ = 0;
  double inlier_ratio_sum_ = 0.0;
  int inlier_ratio_count_ = 0;
};

}  // namespace insideout
