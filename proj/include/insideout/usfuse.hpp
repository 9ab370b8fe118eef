#pragma once

// Timestamped pose streams, temporal synchronization, and forward
// compounding of tracked 2D ultrasound frames into a voxel volume.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "insideout/xform.hpp"

namespace insideout {

struct TimedPose {
  double t = 0.0;  // seconds
  RigidTransform pose;
};

/// Poses from one tracking source; timestamps strictly increasing.
class TimedPoseStream {
 public:
  TimedPoseStream() = default;
  explicit TimedPoseStream(std::string source) : source_(std::move(source)) {}
  TimedPoseStream(std::string source, std::vector<TimedPose> samples);

  /// Throws kInvalidArgument unless t is later than the last sample.
  void push_back(double t, const RigidTransform& pose);

  const std::string& source() const { return source_; }
  void set_source(std::string s) { source_ = std::move(s); }
  const std::vector<TimedPose>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const TimedPose& operator[](std::size_t i) const { return samples_[i]; }
  double start_time() const { return samples_.front().t; }
  double end_time() const { return samples_.back().t; }
  bool covers(double t) const { return !empty() && t >= start_time() && t <= end_time(); }

 private:
  std::string source_;
  std::vector<TimedPose> samples_;
};

/// Pose at time t, interpolated between the bracketing samples. No
/// extrapolation: throws kOutOfRange outside [first, last].
RigidTransform pose_at(const TimedPoseStream& stream, double t);

/// Copy with every timestamp shifted by dt seconds.
TimedPoseStream shift_time(const TimedPoseStream& stream, double dt);

struct LatencyOptions {
  double search_window_s = 0.5;
  double sample_rate_hz = 1000.0;
  /// Angular speed is measured over this interval, centred on each sample.
  double speed_baseline_s = 0.05;
  double min_overlap_s = 2.0;
  /// Minimum variance of angular speed, (rad/s)^2.
  double min_speed_variance = 1e-6;
};

/// Offset (s) by which `target` lags `ref`: shifting target by −offset
/// aligns it with ref. Found as the normalized cross-correlation peak of
/// angular-speed signals, refined by a parabola through the peak.
double estimate_latency(const TimedPoseStream& ref, const TimedPoseStream& target,
                        const LatencyOptions& options = {});

/// 8-bit B-mode image. Pixel (u, v) sits at (u·sx, v·sy, 0) mm in the image plane.
struct UsImage {
  int width = 0;
  int height = 0;
  Vec2 spacing{1.0, 1.0};
  std::vector<std::uint8_t> pixels;  // row-major, v * width + u

  std::uint8_t at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
};

struct UsFrame {
  double t = 0.0;
  UsImage image;
};

struct VolumeSpec {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin = Vec3::Zero();          // in the volume frame
  RigidTransform orientation;          // volume frame in world

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  void validate() const;
  /// World position of a voxel centre.
  Vec3 voxel_center(int i, int j, int k) const;
};

class VoxelVolume {
 public:
  VoxelVolume() = default;
  explicit VoxelVolume(const VolumeSpec& spec);

  const VolumeSpec& spec() const { return spec_; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * spec_.dims[1] + j) * spec_.dims[0] + i;
  }
  bool inside(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < spec_.dims[0] && j < spec_.dims[1] && k < spec_.dims[2];
  }

  double weight(std::size_t idx) const { return weight_[idx]; }
  double accumulator(std::size_t idx) const { return accumulator_[idx]; }
  /// Weighted mean; 0 where weight is 0.
  double value(std::size_t idx) const {
    return weight_[idx] > 0.0 ? accumulator_[idx] / weight_[idx] : 0.0;
  }
  void deposit(std::size_t idx, double value, double weight) {
    accumulator_[idx] += value * weight;
    weight_[idx] += weight;
  }
  void set(std::size_t idx, double accumulator, double weight) {
    accumulator_[idx] = accumulator;
    weight_[idx] = weight;
  }
  std::size_t filled_count() const;

 private:
  VolumeSpec spec_;
  std::vector<double> accumulator_;
  std::vector<double> weight_;
};

struct CompoundOptions {
  bool fill_holes = false;
  int hole_min_neighbors = 4;
};

struct CompoundResult {
  VoxelVolume volume;
  int frames_used = 0;
  int frames_skipped = 0;  // outside the tracked interval
};

/// Forward compounding: each pixel goes to world through
/// pose_at(tracking, t) ∘ t_rgb_us and lands in its nearest voxel with
/// weight 1. Throws kEmptyVolume when nothing lands inside.
CompoundResult compound(std::span<const UsFrame> frames, const TimedPoseStream& tracking,
                        const RigidTransform& t_rgb_us, const VolumeSpec& spec,
                        const CompoundOptions& options = {});

/// Replaces zero-weight voxels that have at least `min_neighbors` filled
/// 6-neighbours with the neighbours' mean. Single pass over a snapshot.
void fill_holes(VoxelVolume& volume, int min_neighbors);

struct SphereFit {
  Vec3 center = Vec3::Zero();  // world, mm
  double radius = 0.0;
  double rms_residual = 0.0;
  int boundary_voxels = 0;
};

/// Sphere through the boundary voxels at `iso`: filled voxels at or above
/// iso having a filled 6-neighbour below it. Algebraic fit, then
/// Gauss-Newton on radial residuals.
SphereFit fit_sphere(const VoxelVolume& volume, double iso);

/// Least-squares sphere through points (algebraic + geometric refinement).
SphereFit fit_sphere_points(std::span<const Vec3> points);

}  // namespace insideout
