#pragma once

// Evaluation protocol: every tracker output is carried into the joint RGB
// camera frame through its static frame chain, then compared with the
// robot ground truth by translation RMS and rotation-axis deviation.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "insideout/usfuse.hpp"
#include "insideout/xform.hpp"

namespace insideout {

enum class SourceKind {
  kSlam,   // camera-in-map poses of the left stereo camera (map = first camera frame)
  kAruco,  // same frame convention as kSlam
  kOts,    // marker-in-tracker poses
};

const char* source_kind_name(SourceKind kind);
SourceKind parse_source_kind(const std::string& name);

/// Static transforms needed to resolve every chain. Missing entries raise
/// kIncompleteChain only when a source actually needs them.
struct FrameChainSpec {
  std::optional<RigidTransform> t_ee_rgb;      // T^EE_RGB
  std::optional<RigidTransform> t_rgb_stereo;  // T^RGB_IR1
  std::optional<RigidTransform> t_rb_ots;      // T^RB_OTS
  std::optional<RigidTransform> t_ee_marker;   // T^EE_OM
  std::optional<RigidTransform> t_rb_ir1_0;    // T^RB_IR1,0 (first left-camera pose)
};

struct SourceStream {
  std::string name;
  SourceKind kind = SourceKind::kSlam;
  TimedPoseStream stream;
  int lost_frames = 0;
};

/// One source resampled at ground-truth timestamps. `residual[i]` is the
/// estimated RGB frame expressed in the true RGB frame, i.e.
/// T^RGB_EE · T^EE_RB · (source chain); identity for a perfect tracker.
struct AlignedStream {
  std::string name;
  std::vector<double> t;
  std::vector<RigidTransform> gt;   // T^RB_RGB from forward kinematics
  std::vector<RigidTransform> est;  // T^RB_RGB through the source chain
  std::vector<RigidTransform> residual;
  int skipped = 0;  // GT timestamps outside the source's interval
  int lost_frames = 0;
};

/// RGB camera pose in the robot base implied by one source sample.
RigidTransform rgb_in_base(SourceKind kind, const RigidTransform& sample, const FrameChainSpec& spec);

std::vector<AlignedStream> to_common_frame(const TimedPoseStream& robot_gt, std::span<const SourceStream> sources,
                                           const FrameChainSpec& spec);

struct RmsStats {
  double rms = 0.0;
  double std = 0.0;  // population std of the residual norms
};

RmsStats translation_rms(std::span<const Vec3> residuals);

struct AxisDeviation {
  std::vector<double> deviation_deg;
  int excluded = 0;  // pairs below the angle floor
};

/// For each i, the relative rotations gt₀⁻¹gtᵢ and est₀⁻¹estᵢ are converted
/// to axis-angle and the angle between their axes is reported. Pairs where
/// either angle is below `floor_deg` are excluded.
AxisDeviation axis_deviation(std::span<const Quat> gt, std::span<const Quat> est, double floor_deg = 2.0);

struct MetricRow {
  std::string source;
  std::string sequence;  // "all" for the aggregate row
  double translation_rms_mm = 0.0;
  double translation_std_mm = 0.0;
  double axis_mean_deg = 0.0;
  double axis_std_deg = 0.0;
  double geodesic_mean_deg = 0.0;
  double geodesic_std_deg = 0.0;
  long pose_count = 0;
  long lost_frames = 0;
  long axis_excluded = 0;

  bool operator==(const MetricRow&) const = default;
};

struct ErrorReport {
  std::vector<MetricRow> rows;  // aggregate rows first, then per-sequence rows
  std::vector<AlignedStream> aligned;  // per sequence × source, for recomputation

  const MetricRow* find(const std::string& source, const std::string& sequence = "all") const;
};

struct SequenceInput {
  std::string name;
  TimedPoseStream robot;
  std::vector<SourceStream> sources;
  std::optional<RigidTransform> t_rb_ir1_0;  // overrides the configured anchor
};

struct ReportConfig {
  double axis_floor_deg = 2.0;
};

ErrorReport make_report(std::span<const SequenceInput> sequences, const FrameChainSpec& spec,
                        const ReportConfig& config = {});

/// Human-readable table: source, translation RMS ± std, axis deviation
/// mean ± std, geodesic mean ± std, poses.
std::string format_table(const ErrorReport& report);
/// Lossless CSV of the metric rows.
std::string report_to_csv(const ErrorReport& report);
ErrorReport report_from_csv(const std::string& csv);

}  // namespace insideout
