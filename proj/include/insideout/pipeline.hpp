#pragma once

// Experiment configuration and the end-to-end runs behind the CLI commands.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "insideout/bench.hpp"
#include "insideout/fileio.hpp"
#include "insideout/optics.hpp"
#include "insideout/orsim.hpp"
#include "insideout/register.hpp"
#include "insideout/usfuse.hpp"
#include "insideout/vostereo.hpp"

namespace insideout {

struct UltrasoundConfig {
  SpherePhantom phantom;
  UsImageSpec image;
  TrajectoryOptions sweep = default_sweep();
  double duration_s = 8.0;
  double rate_hz = 30.0;
  double volume_spacing_mm = 0.5;
  double volume_margin_mm = 8.0;
  double pose_noise_mm = 0.0;   // per-axis sigma added to the tracking stream
  double pose_noise_deg = 0.0;  // per-axis sigma of the rotation vector
  CompoundOptions compound;

  static TrajectoryOptions default_sweep();
};

struct ExperimentConfig {
  std::uint64_t seed = 1;

  Vec3 room_min{-2500.0, -1000.0, 0.0};
  Vec3 room_max{2500.0, 3000.0, 2500.0};
  int landmarks = 1000;
  SceneOptions scene;

  TrajectoryKind trajectory_kind = TrajectoryKind::kSweep;
  double duration_s = 60.0;
  double frame_rate_hz = 30.0;
  TrajectoryOptions trajectory;

  NoiseModel noise;
  CameraIntrinsics camera;
  double baseline_mm = 50.0;
  RigSetup setup = RigSetup::defaults();
  RenderOptions render;
  VoOptions vo;

  UltrasoundConfig ultrasound;
  HandEyeOptions handeye;
  int handeye_stations = 11;
  LatencyOptions latency;
  ReportConfig report;

  StereoRig stereo_rig() const { return StereoRig::rectified(camera, baseline_mm); }

  /// Missing keys keep their defaults; unknown keys raise kParse.
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

const char* trajectory_kind_name(TrajectoryKind kind);
TrajectoryKind parse_trajectory_kind(const std::string& name);

struct SimulatedSequence {
  Scene scene;
  StereoRig rig;
  TimedPoseStream robot;   // flange in base
  TimedPoseStream camera;  // left stereo camera in base
  std::vector<io::ObservationFrame> frames;
  std::vector<std::vector<bool>> outlier_labels;  // per frame, per observation
  TimedPoseStream ots;
  FrameChainSpec chain;
};

SimulatedSequence simulate_sequence(const ExperimentConfig& config);

struct UsSweep {
  TimedPoseStream robot;
  TimedPoseStream truth;     // RGB camera in base
  TimedPoseStream tracking;  // truth with configured pose noise
  std::vector<UsFrame> frames;
  SpherePhantom phantom;
  VolumeSpec volume;
};

UsSweep simulate_us_sweep(const ExperimentConfig& config);

struct TrackOutput {
  TimedPoseStream trajectory;
  std::vector<TrackResult> results;
  SessionStats stats;
};

/// Initializes the map on the first frame and tracks the rest.
TrackOutput run_tracking(const StereoRig& rig, const std::vector<io::ObservationFrame>& frames,
                         const VoOptions& options);

enum class OutputFormat { kText, kCsv };

struct RunOptions {
  std::filesystem::path output_dir = ".";
  OutputFormat format = OutputFormat::kText;
  std::optional<std::uint64_t> seed;  // overrides the config seed
};

// Each command writes its files under output_dir and returns the summary
// printed on stdout.
std::string cmd_simulate(const ExperimentConfig& config, const RunOptions& run);
std::string cmd_track(const ExperimentConfig& config, const std::filesystem::path& observations,
                      const std::filesystem::path& rig_json, const RunOptions& run);
std::string cmd_calibrate_handeye(const ExperimentConfig& config, const std::filesystem::path& pairs_csv,
                                  bool eye_on_base, const RunOptions& run);
std::string cmd_calibrate_camera(const ExperimentConfig& config, const std::filesystem::path& views_csv,
                                 const RunOptions& run);
std::string cmd_calibrate_us(const std::filesystem::path& points_csv, const Vec2& pixel_spacing,
                             const RunOptions& run);
std::string cmd_sync(const ExperimentConfig& config, const std::filesystem::path& ref,
                     const std::filesystem::path& target, const RunOptions& run);
/// With `fit`, also fits a sphere at `iso` (default: midpoint of the
/// configured phantom intensities).
std::string cmd_compound(const ExperimentConfig& config, const std::filesystem::path& frames_csv,
                         const std::filesystem::path& tracking_csv, const std::filesystem::path& calibration_json,
                         const std::filesystem::path& volume_json, bool fit,
                         std::optional<double> iso, const RunOptions& run);

struct EvaluateSource {
  std::string name;
  SourceKind kind = SourceKind::kSlam;
  std::filesystem::path path;
};

std::string cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& gt_csv,
                         const std::vector<EvaluateSource>& sources, const std::filesystem::path& chain_json,
                         const std::string& sequence, const RunOptions& run);

}  // namespace insideout
