#include "insideout/pipeline.hpp"

#include <random>
#include <set>

#include "insideout/error.hpp"
#include "json.hpp"

namespace insideout {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Seed streams derived from the master seed.
enum : std::uint64_t {
  kSceneSeed = 1,
  kTrajectorySeed,
  kFrameSeed,
  kOtsSeed,
  kSweepSeed,
  kUsFrameSeed,
  kVoSeed,
  kUsNoiseSeed,
  kHandEyeSeed,
  kCameraViewSeed,
  kUsPointSeed,
};

json pose_json(const RigidTransform& p) {
  const auto& t = p.translation();
  const auto& q = p.rotation();
  return json{{"t_mm", {t.x(), t.y(), t.z()}}, {"q_wxyz", {q.w(), q.x(), q.y(), q.z()}}};
}

RigidTransform pose_from(const json& j) {
  const auto& t = j.at("t_mm");
  const auto& q = j.at("q_wxyz");
  return RigidTransform(Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                             q.at(3).get<double>()),
                        Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()));
}

class ConfigReader {
 public:
  explicit ConfigReader(const json& j) : j_(j) {}

  template <typename T>
  void operator()(const std::string& path, T& v) {
    seen_.push_back(path);
    const json::json_pointer ptr(path);
    if (!j_.contains(ptr)) return;
    try {
      read(j_.at(ptr), v);
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, "config " + path + ": " + e.what());
    }
  }

  void check_unknown() const {
    const json flat = j_.flatten();
    for (const auto& item : flat.items()) {
      const std::string& key = item.key();
      bool known = false;
      for (const auto& s : seen_) {
        if (key.compare(0, s.size(), s) == 0 && (key.size() == s.size() || key[s.size()] == '/')) {
          known = true;
          break;
        }
      }
      if (!known) fail(ErrorCode::kParse, "unknown config key " + key);
    }
  }

 private:
  static void read(const json& j, double& v) { v = j.get<double>(); }
  static void read(const json& j, int& v) { v = j.get<int>(); }
  static void read(const json& j, bool& v) { v = j.get<bool>(); }
  static void read(const json& j, std::uint64_t& v) { v = j.get<std::uint64_t>(); }
  static void read(const json& j, Vec2& v) { v = Vec2(j.at(0).get<double>(), j.at(1).get<double>()); }
  static void read(const json& j, Vec3& v) {
    v = Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
  }
  static void read(const json& j, Quat& v) {
    v = Quat(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>());
    if (!(v.norm() > 1e-12)) fail(ErrorCode::kInvalidArgument, "zero quaternion in config");
    v.normalize();
  }
  static void read(const json& j, RigidTransform& v) { v = pose_from(j); }
  static void read(const json& j, TrajectoryKind& v) { v = parse_trajectory_kind(j.get<std::string>()); }

  const json& j_;
  std::vector<std::string> seen_;
};

class ConfigWriter {
 public:
  template <typename T>
  void operator()(const std::string& path, const T& v) {
    j_[json::json_pointer(path)] = write(v);
  }
  const json& result() const { return j_; }

 private:
  static json write(double v) { return v; }
  static json write(int v) { return v; }
  static json write(bool v) { return v; }
  static json write(std::uint64_t v) { return v; }
  static json write(const Vec2& v) { return {v.x(), v.y()}; }
  static json write(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
  static json write(const Quat& v) { return {v.w(), v.x(), v.y(), v.z()}; }
  static json write(const RigidTransform& v) { return pose_json(v); }
  static json write(TrajectoryKind v) { return trajectory_kind_name(v); }

  json j_ = json::object();
};

template <typename V, typename T>
void visit_trajectory(V& v, const std::string& p, T& o) {
  v(p + "/pivot", o.pivot);
  v(p + "/base_orientation_wxyz", o.base_orientation);
  v(p + "/sweep_extent_mm", o.sweep_extent_mm);
  v(p + "/sweep_period_s", o.sweep_period_s);
  v(p + "/sweep_phase_deg", o.sweep_phase_deg);
  v(p + "/fan_deg", o.fan_deg);
  v(p + "/pan_deg", o.pan_deg);
  v(p + "/pan_period_s", o.pan_period_s);
  v(p + "/tilt_jitter_deg", o.tilt_jitter_deg);
  v(p + "/jitter_mm", o.jitter_mm);
  v(p + "/freehand_translation_mm", o.freehand_translation_mm);
  v(p + "/freehand_rotation_deg", o.freehand_rotation_deg);
  v(p + "/waypoint_interval_s", o.waypoint_interval_s);
}

template <typename V, typename C>
void visit_config(V& v, C& c) {
  v("/seed", c.seed);

  v("/scene/room_min_mm", c.room_min);
  v("/scene/room_max_mm", c.room_max);
  v("/scene/landmarks", c.landmarks);
  v("/scene/wall_fraction", c.scene.wall_fraction);
  v("/scene/clutter_clusters", c.scene.clutter_clusters);
  v("/scene/cluster_radius_mm", c.scene.cluster_radius_mm);
  v("/scene/keepout_center_mm", c.scene.keepout_center);
  v("/scene/keepout_radius_mm", c.scene.keepout_radius_mm);

  v("/trajectory/kind", c.trajectory_kind);
  v("/trajectory/duration_s", c.duration_s);
  v("/trajectory/rate_hz", c.frame_rate_hz);
  visit_trajectory(v, "/trajectory", c.trajectory);

  v("/noise/pixel_sigma", c.noise.pixel_sigma);
  v("/noise/detection_prob", c.noise.detection_prob);
  v("/noise/id_corruption_prob", c.noise.id_corruption_prob);
  v("/noise/ots_trans_sigma_mm", c.noise.ots_trans_sigma);
  v("/noise/ots_rot_sigma_deg", c.noise.ots_rot_sigma);
  v("/noise/ots_latency_s", c.noise.ots_latency);
  v("/noise/ots_rate_hz", c.noise.ots_rate);

  v("/rig/camera/fx", c.camera.fx);
  v("/rig/camera/fy", c.camera.fy);
  v("/rig/camera/cx", c.camera.cx);
  v("/rig/camera/cy", c.camera.cy);
  v("/rig/camera/k1", c.camera.k1);
  v("/rig/camera/k2", c.camera.k2);
  v("/rig/camera/width", c.camera.width);
  v("/rig/camera/height", c.camera.height);
  v("/rig/baseline_mm", c.baseline_mm);
  v("/rig/t_ee_rgb", c.setup.t_ee_rgb);
  v("/rig/t_rgb_stereo", c.setup.t_rgb_stereo);
  v("/rig/t_rb_ots", c.setup.t_rb_ots);
  v("/rig/t_ee_marker", c.setup.t_ee_marker);
  v("/rig/t_rgb_us", c.setup.t_rgb_us);

  v("/render/min_range_mm", c.render.min_range_mm);
  v("/render/max_range_mm", c.render.max_range_mm);

  v("/vo/min_init_landmarks", c.vo.min_init_landmarks);
  v("/vo/ransac_threshold_px", c.vo.ransac_threshold_px);
  v("/vo/min_inliers", c.vo.min_inliers);
  v("/vo/ransac_max_iterations", c.vo.ransac_max_iterations);
  v("/vo/ransac_confidence", c.vo.ransac_confidence);
  v("/vo/refine_max_iterations", c.vo.refine_max_iterations);
  v("/vo/refine_tolerance", c.vo.refine_tolerance);
  v("/vo/keyframe_tracked_fraction", c.vo.keyframe_tracked_fraction);
  v("/vo/keyframe_translation_mm", c.vo.keyframe_translation_mm);
  v("/vo/keyframe_rotation_deg", c.vo.keyframe_rotation_deg);
  v("/vo/cull_window_checks", c.vo.cull_window_checks);
  v("/vo/cull_min_observations", c.vo.cull_min_observations);
  v("/vo/max_consecutive_outliers", c.vo.max_consecutive_outliers);
  v("/vo/stereo_match_threshold_px", c.vo.stereo_match_threshold_px);
  v("/vo/min_depth_mm", c.vo.min_depth_mm);
  v("/vo/max_depth_mm", c.vo.max_depth_mm);

  auto& us = c.ultrasound;
  v("/ultrasound/phantom/radius_mm", us.phantom.radius);
  v("/ultrasound/phantom/inside", us.phantom.inside);
  v("/ultrasound/phantom/outside", us.phantom.outside);
  v("/ultrasound/phantom/band_mm", us.phantom.band_mm);
  v("/ultrasound/phantom/speckle_sigma", us.phantom.speckle_sigma);
  v("/ultrasound/image/width", us.image.width);
  v("/ultrasound/image/height", us.image.height);
  v("/ultrasound/image/spacing_mm", us.image.spacing);
  visit_trajectory(v, "/ultrasound/sweep", us.sweep);
  v("/ultrasound/sweep/duration_s", us.duration_s);
  v("/ultrasound/sweep/rate_hz", us.rate_hz);
  v("/ultrasound/volume/spacing_mm", us.volume_spacing_mm);
  v("/ultrasound/volume/margin_mm", us.volume_margin_mm);
  v("/ultrasound/pose_noise_mm", us.pose_noise_mm);
  v("/ultrasound/pose_noise_deg", us.pose_noise_deg);
  v("/ultrasound/compound/fill_holes", us.compound.fill_holes);
  v("/ultrasound/compound/hole_min_neighbors", us.compound.hole_min_neighbors);

  v("/handeye/min_rotation_deg", c.handeye.min_rotation_deg);
  v("/handeye/parallel_axis_tolerance_rad", c.handeye.parallel_axis_tolerance_rad);
  v("/handeye/stations", c.handeye_stations);

  v("/latency/search_window_s", c.latency.search_window_s);
  v("/latency/sample_rate_hz", c.latency.sample_rate_hz);
  v("/latency/speed_baseline_s", c.latency.speed_baseline_s);
  v("/latency/min_overlap_s", c.latency.min_overlap_s);
  v("/latency/min_speed_variance", c.latency.min_speed_variance);

  v("/report/axis_floor_deg", c.report.axis_floor_deg);
}

std::uint64_t effective_seed(const ExperimentConfig& config, const RunOptions& run) {
  return run.seed.value_or(config.seed);
}

// Key/value summary printed by the commands.
class Summary {
 public:
  void add(const std::string& key, const std::string& value) { rows_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, io::fmt(value)); }
  void add(const std::string& key, long value) { add(key, std::to_string(value)); }
  void add(const std::string& key, int value) { add(key, std::to_string(value)); }
  void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }

  std::string str(OutputFormat f) const {
    std::string out = f == OutputFormat::kCsv ? "key,value\n" : "";
    for (const auto& [k, v] : rows_) out += k + (f == OutputFormat::kCsv ? "," : ": ") + v + '\n';
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

void add_pose(Summary& s, const std::string& prefix, const RigidTransform& p) {
  const auto& t = p.translation();
  const auto& q = p.rotation();
  s.add(prefix + "_t_mm", io::fmt(t.x()) + " " + io::fmt(t.y()) + " " + io::fmt(t.z()));
  s.add(prefix + "_q_wxyz", io::fmt(q.w()) + " " + io::fmt(q.x()) + " " + io::fmt(q.y()) + " " + io::fmt(q.z()));
}

RigidTransform perturb(const RigidTransform& p, double sigma_mm, double sigma_deg, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec3 dt(gauss(rng), gauss(rng), gauss(rng));
  const Vec3 dr(gauss(rng), gauss(rng), gauss(rng));
  return RigidTransform(p.rotation() * rotation_from_vector(deg_to_rad(sigma_deg) * dr),
                        p.translation() + sigma_mm * dt);
}

json intrinsics_json(const CameraIntrinsics& c) {
  return json{{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"k1", c.k1},
              {"k2", c.k2}, {"width", c.width}, {"height", c.height}};
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

}  // namespace

TrajectoryOptions UltrasoundConfig::default_sweep() {
  TrajectoryOptions o;
  o.sweep_extent_mm = 60.0;
  o.sweep_period_s = 16.0;
  o.sweep_phase_deg = -90.0;
  o.fan_deg = 0.0;
  o.tilt_jitter_deg = 0.2;
  o.jitter_mm = 0.5;
  return o;
}

const char* trajectory_kind_name(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kSweep: return "sweep";
    case TrajectoryKind::kRotationOnly: return "rotation_only";
    case TrajectoryKind::kFreehand: return "freehand";
  }
  return "sweep";
}

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "sweep") return TrajectoryKind::kSweep;
  if (name == "rotation_only") return TrajectoryKind::kRotationOnly;
  if (name == "freehand") return TrajectoryKind::kFreehand;
  fail(ErrorCode::kParse, "unknown trajectory kind '" + name + "'");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kParse, "config must be a JSON object");
  ExperimentConfig c;
  ConfigReader reader(j);
  visit_config(reader, c);
  reader.check_unknown();
  c.camera.validate();
  c.noise.validate();
  if (!(c.baseline_mm > 0.0)) fail(ErrorCode::kInvalidArgument, "baseline must be positive");
  return c;
}

std::string ExperimentConfig::to_json() const {
  ConfigWriter writer;
  visit_config(writer, *this);
  return writer.result().dump(2) + "\n";
}

ExperimentConfig load_config(const fs::path& path) { return ExperimentConfig::from_json(io::read_text(path)); }

SimulatedSequence simulate_sequence(const ExperimentConfig& c) {
  SimulatedSequence s;
  s.rig = c.stereo_rig();
  s.scene = generate_scene(derive_seed(c.seed, kSceneSeed), c.room_min, c.room_max, c.landmarks, c.scene);
  s.robot = generate_trajectory(c.trajectory_kind, c.duration_s, c.frame_rate_hz,
                                derive_seed(c.seed, kTrajectorySeed), c.trajectory);
  const RigidTransform ee_to_left = c.setup.t_ee_rgb * c.setup.t_rgb_stereo;
  s.camera = TimedPoseStream("camera");
  const std::uint64_t frame_seed = derive_seed(c.seed, kFrameSeed);
  for (std::size_t i = 0; i < s.robot.size(); ++i) {
    const auto& sample = s.robot[i];
    const RigidTransform cam = sample.pose * ee_to_left;
    s.camera.push_back(sample.t, cam);
    auto frame = render_stereo_frame(s.scene, cam, s.rig, c.noise, derive_seed(frame_seed, i), c.render);
    s.frames.push_back({static_cast<long>(i), sample.t, std::move(frame.observations)});
    s.outlier_labels.push_back(std::move(frame.is_outlier));
  }
  s.ots = simulate_ots(s.robot, c.setup, c.noise, derive_seed(c.seed, kOtsSeed));
  s.chain.t_ee_rgb = c.setup.t_ee_rgb;
  s.chain.t_rgb_stereo = c.setup.t_rgb_stereo;
  s.chain.t_rb_ots = c.setup.t_rb_ots;
  s.chain.t_ee_marker = c.setup.t_ee_marker;
  s.chain.t_rb_ir1_0 = s.camera[0].pose;
  return s;
}

UsSweep simulate_us_sweep(const ExperimentConfig& c) {
  const auto& u = c.ultrasound;
  UsSweep s;
  s.robot = generate_trajectory(TrajectoryKind::kSweep, u.duration_s, u.rate_hz, derive_seed(c.seed, kSweepSeed),
                                u.sweep);
  s.truth = TimedPoseStream("us_truth");
  for (const auto& p : s.robot.samples()) s.truth.push_back(p.t, p.pose * c.setup.t_ee_rgb);

  // Phantom centred under the image centre at mid-sweep.
  const RigidTransform mid = pose_at(s.truth, 0.5 * (s.truth.start_time() + s.truth.end_time()));
  const Vec3 image_center(0.5 * (u.image.width - 1) * u.image.spacing.x(),
                          0.5 * (u.image.height - 1) * u.image.spacing.y(), 0.0);
  s.phantom = u.phantom;
  s.phantom.center = (mid * c.setup.t_rgb_us).apply(image_center);

  const double half = u.phantom.radius + u.volume_margin_mm;
  const int n = static_cast<int>(std::ceil(2.0 * half / u.volume_spacing_mm)) + 1;
  s.volume.dims = {n, n, n};
  s.volume.spacing = Vec3::Constant(u.volume_spacing_mm);
  s.volume.origin = s.phantom.center - Vec3::Constant(0.5 * (n - 1) * u.volume_spacing_mm);

  const std::uint64_t frame_seed = derive_seed(c.seed, kUsFrameSeed);
  std::mt19937_64 rng(derive_seed(c.seed, kUsNoiseSeed));
  s.tracking = TimedPoseStream("us_tracking");
  for (std::size_t i = 0; i < s.truth.size(); ++i) {
    const auto& p = s.truth[i];
    s.frames.push_back({p.t, render_us_frame(s.phantom, p.pose, c.setup.t_rgb_us, u.image, derive_seed(frame_seed, i))});
    s.tracking.push_back(p.t, perturb(p.pose, u.pose_noise_mm, u.pose_noise_deg, rng));
  }
  return s;
}

TrackOutput run_tracking(const StereoRig& rig, const std::vector<io::ObservationFrame>& frames,
                         const VoOptions& options) {
  if (frames.empty()) fail(ErrorCode::kInsufficientData, "no observation frames");
  auto session = TrackSession::init_map(rig, frames.front().observations, frames.front().t, options);
  TrackOutput out;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    out.results.push_back(session.track_frame(frames[i].observations, frames[i].t));
  }
  out.trajectory = session.trajectory();
  out.trajectory.set_source("vo");
  out.stats = session.stats();
  return out;
}

std::string cmd_simulate(const ExperimentConfig& config, const RunOptions& run) {
  ExperimentConfig c = config;
  c.seed = effective_seed(config, run);
  const fs::path& out = run.output_dir;
  fs::create_directories(out);

  const auto seq = simulate_sequence(c);
  io::write_text(out / "config.json", c.to_json());
  io::write_text(out / "scene.json", io::scene_json(seq.scene));
  io::write_text(out / "rig.json", io::stereo_rig_json(seq.rig, c.setup));
  io::write_text(out / "chain.json", io::chain_json(seq.chain));
  io::save_pose_stream(out / "gt_robot.csv", seq.robot);
  io::save_pose_stream(out / "gt_camera.csv", seq.camera);
  io::write_text(out / "observations.csv", io::format_observations(seq.frames));
  io::save_pose_stream(out / "ots.csv", seq.ots);

  // Calibration problems for the same rig.
  const auto stations = generate_trajectory(TrajectoryKind::kFreehand, std::max(c.handeye_stations, 2) * 1.5, 1.0 / 1.5,
                                            derive_seed(c.seed, kHandEyeSeed), c.trajectory);
  std::vector<RigidTransform> flange, camera;
  for (const auto& p : stations.samples()) {
    flange.push_back(p.pose);
    camera.push_back(p.pose * c.setup.t_ee_rgb * c.setup.t_rgb_stereo);
  }
  io::write_text(out / "handeye_pairs.csv", io::format_motion_pairs(eye_on_hand_motions(flange, camera)));
  io::write_text(out / "camera_views.csv",
                 io::format_planar_views(simulate_planar_views(c.camera, 5, c.noise.pixel_sigma,
                                                               derive_seed(c.seed, kCameraViewSeed))));
  io::write_text(out / "us_points.csv",
                 io::format_us_points(simulate_us_points(c.setup.t_rgb_us, c.ultrasound.image, 20, 0.0, 0.0,
                                                         derive_seed(c.seed, kUsPointSeed))));

  const auto us = simulate_us_sweep(c);
  io::save_us_frames(out, us.frames);
  io::save_pose_stream(out / "us_tracking.csv", us.tracking);
  io::write_text(out / "volume_spec.json", io::volume_spec_json(us.volume));
  write_json(out / "phantom.json", json{{"center_mm", {us.phantom.center.x(), us.phantom.center.y(), us.phantom.center.z()}},
                                        {"radius_mm", us.phantom.radius}});

  std::size_t n_obs = 0;
  for (const auto& f : seq.frames) n_obs += f.observations.size();
  Summary s;
  s.add("seed", std::to_string(c.seed));
  s.add("landmarks", seq.scene.landmarks.size());
  s.add("frames", seq.frames.size());
  s.add("observations", n_obs);
  s.add("ots_samples", seq.ots.size());
  s.add("us_frames", us.frames.size());
  s.add("output", out.string());
  return s.str(run.format);
}

std::string cmd_track(const ExperimentConfig& config, const fs::path& observations, const fs::path& rig_json,
                      const RunOptions& run) {
  const auto frames = io::parse_observations(io::read_text(observations));
  const StereoRig rig = rig_json.empty() ? config.stereo_rig() : io::parse_stereo_rig(io::read_text(rig_json));
  VoOptions vo = config.vo;
  vo.seed = derive_seed(effective_seed(config, run), kVoSeed);
  const auto t = run_tracking(rig, frames, vo);
  fs::create_directories(run.output_dir);
  io::save_pose_stream(run.output_dir / "vo.csv", t.trajectory);

  Summary s;
  s.add("frames", frames.size());
  s.add("tracked_poses", t.trajectory.size());
  s.add("frames_lost", t.stats.frames_lost);
  s.add("keyframes", t.stats.keyframes);
  s.add("map_size", t.stats.map_size);
  s.add("landmarks_created", t.stats.landmarks_created);
  s.add("mean_inlier_ratio", t.stats.mean_inlier_ratio);
  const std::string text = s.str(run.format);
  io::write_text(run.output_dir / "track_stats.txt", text);
  return text;
}

std::string cmd_calibrate_handeye(const ExperimentConfig& config, const fs::path& pairs_csv, bool eye_on_base,
                                  const RunOptions& run) {
  const auto pairs = io::parse_motion_pairs(io::read_text(pairs_csv));
  const auto r = eye_on_base ? hand_eye_eye_on_base(pairs, config.handeye) : hand_eye_tsai_lenz(pairs, config.handeye);
  write_json(run.output_dir / "handeye.json",
             json{{"mode", eye_on_base ? "eye_on_base" : "eye_on_hand"},
                  {"transform", pose_json(r.x)},
                  {"rotation_residual_deg", r.rotation_residual_deg},
                  {"translation_residual_mm", r.translation_residual_mm},
                  {"pairs_used", r.pairs_used},
                  {"pairs_discarded", r.pairs_discarded}});
  Summary s;
  add_pose(s, "x", r.x);
  s.add("rotation_residual_deg", r.rotation_residual_deg);
  s.add("translation_residual_mm", r.translation_residual_mm);
  s.add("pairs_used", r.pairs_used);
  s.add("pairs_discarded", r.pairs_discarded);
  return s.str(run.format);
}

std::string cmd_calibrate_camera(const ExperimentConfig& config, const fs::path& views_csv, const RunOptions& run) {
  const auto views = io::parse_planar_views(io::read_text(views_csv));
  const auto r = calibrate_intrinsics(views, config.camera.width, config.camera.height);
  write_json(run.output_dir / "camera.json",
             json{{"intrinsics", intrinsics_json(r.intrinsics)}, {"rms_px", r.rms_px}, {"iterations", r.iterations},
                  {"views", views.size()}});
  Summary s;
  const auto& k = r.intrinsics;
  s.add("fx", k.fx);
  s.add("fy", k.fy);
  s.add("cx", k.cx);
  s.add("cy", k.cy);
  s.add("k1", k.k1);
  s.add("k2", k.k2);
  s.add("rms_px", r.rms_px);
  s.add("iterations", r.iterations);
  return s.str(run.format);
}

std::string cmd_calibrate_us(const fs::path& points_csv, const Vec2& pixel_spacing, const RunOptions& run) {
  const auto input = io::parse_us_points(io::read_text(points_csv), pixel_spacing);
  const auto r = us_calibrate(input);
  write_json(run.output_dir / "us_calibration.json",
             json{{"transform", pose_json(r.transform)}, {"fre_mm", r.fre}, {"points", input.stylus_tips.size()}});
  Summary s;
  add_pose(s, "t_probe_us", r.transform);
  s.add("fre_mm", r.fre);
  return s.str(run.format);
}

std::string cmd_sync(const ExperimentConfig& config, const fs::path& ref, const fs::path& target,
                     const RunOptions& run) {
  const auto a = io::load_pose_stream(ref);
  const auto b = io::load_pose_stream(target);
  const double offset = estimate_latency(a, b, config.latency);
  write_json(run.output_dir / "sync.json", json{{"offset_s", offset}});
  Summary s;
  s.add("offset_s", offset);
  s.add("offset_ms", offset * 1000.0);
  return s.str(run.format);
}

std::string cmd_compound(const ExperimentConfig& config, const fs::path& frames_csv, const fs::path& tracking_csv,
                         const fs::path& calibration_json, const fs::path& volume_json, bool fit,
                         std::optional<double> iso, const RunOptions& run) {
  const auto frames = io::load_us_frames(frames_csv);
  const auto tracking = io::load_pose_stream(tracking_csv);
  const VolumeSpec spec = io::parse_volume_spec(io::read_text(volume_json));
  RigidTransform t_rgb_us = config.setup.t_rgb_us;
  if (!calibration_json.empty()) {
    try {
      const json j = json::parse(io::read_text(calibration_json));
      if (j.contains("transform")) t_rgb_us = pose_from(j.at("transform"));
      else if (j.contains("setup")) t_rgb_us = pose_from(j.at("setup").at("t_rgb_us"));
      else fail(ErrorCode::kParse, calibration_json.string() + ": no US calibration transform");
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, calibration_json.string() + ": " + e.what());
    }
  }
  auto r = compound(frames, tracking, t_rgb_us, spec, config.ultrasound.compound);
  fs::create_directories(run.output_dir);
  io::save_volume(run.output_dir, "volume", r.volume);
  Summary s;
  s.add("frames_used", r.frames_used);
  s.add("frames_skipped", r.frames_skipped);
  s.add("filled_voxels", r.volume.filled_count());
  s.add("voxels", r.volume.spec().voxel_count());
  if (fit) {
    const auto& ph = config.ultrasound.phantom;
    const double level = iso.value_or(0.5 * (ph.inside + ph.outside));
    const auto sphere = fit_sphere(r.volume, level);
    write_json(run.output_dir / "sphere_fit.json",
               json{{"center_mm", {sphere.center.x(), sphere.center.y(), sphere.center.z()}},
                    {"radius_mm", sphere.radius},
                    {"rms_residual_mm", sphere.rms_residual},
                    {"boundary_voxels", sphere.boundary_voxels},
                    {"iso", level}});
    s.add("sphere_radius_mm", sphere.radius);
    s.add("sphere_rms_residual_mm", sphere.rms_residual);
  }
  return s.str(run.format);
}

std::string cmd_evaluate(const ExperimentConfig& config, const fs::path& gt_csv,
                         const std::vector<EvaluateSource>& sources, const fs::path& chain_json,
                         const std::string& sequence, const RunOptions& run) {
  if (sources.empty()) fail(ErrorCode::kInvalidArgument, "evaluate needs at least one source");
  SequenceInput seq;
  seq.name = sequence.empty() ? "seq0" : sequence;
  seq.robot = io::load_pose_stream(gt_csv);
  for (const auto& src : sources) {
    SourceStream ss;
    ss.name = src.name;
    ss.kind = src.kind;
    ss.stream = io::load_pose_stream(src.path);
    seq.sources.push_back(std::move(ss));
  }
  const FrameChainSpec chain = io::parse_chain(io::read_text(chain_json));
  const std::vector<SequenceInput> seqs{std::move(seq)};
  const auto report = make_report(seqs, chain, config.report);
  fs::create_directories(run.output_dir);
  const std::string csv = report_to_csv(report);
  io::write_text(run.output_dir / "report.csv", csv);
  return run.format == OutputFormat::kCsv ? csv : format_table(report);
}

}  // namespace insideout
