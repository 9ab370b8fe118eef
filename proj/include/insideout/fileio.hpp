#pragma once

// Text file formats shared by the CLI and the C API.
//
//   pose stream   CSV  timestamp_s,tx_mm,ty_mm,tz_mm,qw,qx,qy,qz
//   observations  CSV  frame,timestamp_s,feature_id,u_left,v_left,u_right,v_right
//                      (right pixel empty when unmatched)
//   planar views  CSV  view_id,grid_x_mm,grid_y_mm,u_px,v_px
//   motion pairs  CSV  a_tx,a_ty,a_tz,a_qw,a_qx,a_qy,a_qz,b_tx,...,b_qz
//   US points     CSV  tip_x,tip_y,tip_z,u_px,v_px,tx,ty,tz,qw,qx,qy,qz
//   US frames     CSV  index,timestamp_s,width,height,spacing_x_mm,spacing_y_mm,file
//                      + one raw 8-bit file per frame
//   rig, scene, chain, volume metadata: JSON
//
// Numbers are written with 17 significant digits so files round-trip exactly.

#include <filesystem>
#include <string>
#include <vector>

#include "insideout/bench.hpp"
#include "insideout/optics.hpp"
#include "insideout/orsim.hpp"
#include "insideout/register.hpp"
#include "insideout/usfuse.hpp"
#include "insideout/vostereo.hpp"

namespace insideout::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

std::string format_pose_stream(const TimedPoseStream& stream);
TimedPoseStream parse_pose_stream(const std::string& text, const std::string& source = "");
TimedPoseStream load_pose_stream(const fs::path& path);
void save_pose_stream(const fs::path& path, const TimedPoseStream& stream);

struct ObservationFrame {
  long index = 0;
  double t = 0.0;
  std::vector<FeatureObservation> observations;
};
std::string format_observations(const std::vector<ObservationFrame>& frames);
std::vector<ObservationFrame> parse_observations(const std::string& text);

std::vector<PlanarView> parse_planar_views(const std::string& text);
std::string format_planar_views(const std::vector<PlanarView>& views);

std::vector<MotionPair> parse_motion_pairs(const std::string& text);
std::string format_motion_pairs(const std::vector<MotionPair>& pairs);

/// US calibration points; pixel spacing is supplied separately.
UsCalibrationInput parse_us_points(const std::string& text, const Vec2& pixel_spacing);
std::string format_us_points(const UsCalibrationInput& input);

void save_us_frames(const fs::path& dir, const std::vector<UsFrame>& frames);
std::vector<UsFrame> load_us_frames(const fs::path& index_csv);

/// Raw float32 little-endian values + JSON metadata (dims, spacing, origin,
/// orientation) + float32 weights.
void save_volume(const fs::path& dir, const std::string& stem, const VoxelVolume& volume);

// JSON records.
std::string stereo_rig_json(const StereoRig& rig, const RigSetup& setup);
StereoRig parse_stereo_rig(const std::string& json_text);
RigSetup parse_rig_setup(const std::string& json_text);

std::string chain_json(const FrameChainSpec& spec);
FrameChainSpec parse_chain(const std::string& json_text);

std::string scene_json(const Scene& scene);
Scene parse_scene(const std::string& json_text);

std::string volume_spec_json(const VolumeSpec& spec);
VolumeSpec parse_volume_spec(const std::string& json_text);

std::string fmt(double v);

}  // namespace insideout::io
