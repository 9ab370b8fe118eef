#include "insideout/orsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "insideout/error.hpp"

namespace insideout {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Scene generate_scene(std::uint64_t seed, const Vec3& bmin, const Vec3& bmax, int n_landmarks,
                     const SceneOptions& options) {
  if (n_landmarks < 1) fail(ErrorCode::kInvalidArgument, "scene needs at least one landmark");
  if (!((bmax - bmin).minCoeff() > 0.0)) fail(ErrorCode::kInvalidArgument, "empty room bounds");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto in_box = [&](const Vec3& lo, const Vec3& hi) {
    return Vec3(lo.x() + uni(rng) * (hi.x() - lo.x()), lo.y() + uni(rng) * (hi.y() - lo.y()),
                lo.z() + uni(rng) * (hi.z() - lo.z()));
  };
  const Vec3 size = bmax - bmin;
  // Wall areas: x-walls (y-z), y-walls (x-z), floor/ceiling (x-y).
  const double ax = size.y() * size.z(), ay = size.x() * size.z(), az = size.x() * size.y();
  const double total = 2.0 * (ax + ay + az);

  Scene scene;
  scene.bounds_min = bmin;
  scene.bounds_max = bmax;
  scene.seed = seed;

  const int n_wall = std::clamp(static_cast<int>(std::lround(options.wall_fraction * n_landmarks)), 0,
                                n_landmarks);
  const int n_clutter = n_landmarks - n_wall;

  std::vector<Vec3> centers;
  if (n_clutter > 0) {
    const double r = options.cluster_radius_mm;
    const Vec3 lo = bmin + Vec3::Constant(r).cwiseMin(0.5 * size);
    const Vec3 hi = bmax - Vec3::Constant(r).cwiseMin(0.5 * size);
    const int clusters = std::max(1, options.clutter_clusters);
    for (int c = 0; c < clusters; ++c) {
      Vec3 p = in_box(lo, hi);
      for (int tries = 0; tries < 100 && (p - options.keepout_center).norm() < options.keepout_radius_mm + r;
           ++tries) {
        p = in_box(lo, hi);
      }
      centers.push_back(p);
    }
  }

  for (int i = 0; i < n_landmarks; ++i) {
    Vec3 p;
    if (i < n_wall) {
      double pick = uni(rng) * total;
      const Vec3 q = in_box(bmin, bmax);
      p = q;
      if (pick < 2.0 * ax) {
        p.x() = pick < ax ? bmin.x() : bmax.x();
      } else if ((pick -= 2.0 * ax) < 2.0 * ay) {
        p.y() = pick < ay ? bmin.y() : bmax.y();
      } else {
        pick -= 2.0 * ay;
        p.z() = pick < az ? bmin.z() : bmax.z();
      }
    } else {
      const Vec3& c = centers[static_cast<std::size_t>(i) % centers.size()];
      const double r = options.cluster_radius_mm;
      do {
        p = c + r * (2.0 * Vec3(uni(rng), uni(rng), uni(rng)) - Vec3::Ones());
        p = p.cwiseMax(bmin).cwiseMin(bmax);
      } while ((p - options.keepout_center).norm() < options.keepout_radius_mm);
    }
    scene.landmarks.push_back({static_cast<std::uint64_t>(i), p});
  }
  return scene;
}

RigidTransform RigSetup::default_rgb_in_ee() {
  return {rotation_about(Vec3::UnitX(), deg_to_rad(3.0)) * rotation_about(Vec3::UnitY(), deg_to_rad(-2.0)),
          Vec3(35.0, -20.0, 60.0)};
}

RigidTransform RigSetup::default_stereo_in_rgb() {
  return RigidTransform::from_translation(Vec3(-15.0, 0.0, 0.0));
}

RigidTransform RigSetup::default_tracker_in_base() {
  // Tracker in a corner of the room, looking back at the robot.
  return {rotation_about(Vec3::UnitZ(), deg_to_rad(135.0)) * rotation_about(Vec3::UnitX(), deg_to_rad(-100.0)),
          Vec3(1500.0, -1500.0, 1800.0)};
}

RigidTransform RigSetup::default_marker_in_ee() {
  return {rotation_about(Vec3::UnitZ(), deg_to_rad(30.0)), Vec3(0.0, 60.0, 20.0)};
}

RigidTransform RigSetup::default_us_plane() {
  // Image x runs along the camera optical axis, image y along camera "down";
  // the plane normal is the camera −x axis.
  Mat3 r;
  r.col(0) = Vec3(0.0, 0.0, 1.0);
  r.col(1) = Vec3(0.0, 1.0, 0.0);
  r.col(2) = Vec3(-1.0, 0.0, 0.0);
  return {r, Vec3(10.0, 60.0, -20.0)};
}

RigSetup RigSetup::defaults() {
  return {default_rgb_in_ee(), default_stereo_in_rgb(), default_tracker_in_base(), default_marker_in_ee(),
          default_us_plane()};
}

void NoiseModel::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(detection_prob) || !prob(id_corruption_prob)) {
    fail(ErrorCode::kInvalidArgument, "noise probabilities must lie in [0, 1]");
  }
  if (!(pixel_sigma >= 0.0 && ots_trans_sigma >= 0.0 && ots_rot_sigma >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "noise sigmas must be non-negative");
  }
  if (!(ots_rate > 0.0)) fail(ErrorCode::kInvalidArgument, "tracker rate must be positive");
}

NoiseModel NoiseModel::noiseless() {
  NoiseModel n;
  n.pixel_sigma = 0.0;
  n.ots_trans_sigma = 0.0;
  n.ots_rot_sigma = 0.0;
  n.ots_latency = 0.0;
  return n;
}

Quat TrajectoryOptions::default_base_orientation() {
  Mat3 r;
  r.col(0) = Vec3(1.0, 0.0, 0.0);
  r.col(1) = Vec3(0.0, 0.0, -1.0);
  r.col(2) = Vec3(0.0, 1.0, 0.0);
  return Quat(r);
}

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;

// Catmull-Rom spline through waypoints spaced `interval` seconds apart,
// starting one interval before t = 0. C¹ everywhere.
class WaypointSpline {
 public:
  WaypointSpline(std::vector<Vec6> points, double interval) : p_(std::move(points)), dt_(interval) {}

  Vec6 at(double t) const {
    const double u = t / dt_ + 1.0;
    const auto j = std::clamp<long>(static_cast<long>(std::floor(u)), 1, static_cast<long>(p_.size()) - 3);
    const double s = u - static_cast<double>(j);
    const Vec6& p0 = p_[j - 1];
    const Vec6& p1 = p_[j];
    const Vec6& p2 = p_[j + 1];
    const Vec6& p3 = p_[j + 2];
    return 0.5 * (2.0 * p1 + (p2 - p0) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s * s +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s * s * s);
  }

 private:
  std::vector<Vec6> p_;
  double dt_;
};

WaypointSpline random_spline(std::mt19937_64& rng, double duration, double interval, double trans_amp,
                             double rot_amp_rad) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const int n = static_cast<int>(std::ceil(duration / interval)) + 4;
  std::vector<Vec6> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec6 v;
    for (int k = 0; k < 3; ++k) v(k) = trans_amp * uni(rng);
    for (int k = 3; k < 6; ++k) v(k) = rot_amp_rad * uni(rng);
    pts.push_back(v);
  }
  return WaypointSpline(std::move(pts), interval);
}

}  // namespace

TimedPoseStream generate_trajectory(TrajectoryKind kind, double duration_s, double rate_hz, std::uint64_t seed,
                                    const TrajectoryOptions& o) {
  if (!(rate_hz > 0.0)) fail(ErrorCode::kInvalidArgument, "trajectory rate must be positive");
  if (!(duration_s > 0.0)) fail(ErrorCode::kInvalidArgument, "trajectory duration must be positive");
  const auto n = static_cast<long>(std::llround(duration_s * rate_hz));
  std::mt19937_64 rng(seed);
  const double interval = std::max(o.waypoint_interval_s, 1e-3);

  TimedPoseStream out("robot");
  const Quat base = o.base_orientation;
  switch (kind) {
    case TrajectoryKind::kSweep: {
      const auto jitter = random_spline(rng, duration_s, interval, o.jitter_mm, deg_to_rad(o.tilt_jitter_deg));
      for (long i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        const double ph = 2.0 * kPi * t / o.sweep_period_s + deg_to_rad(o.sweep_phase_deg);
        const Vec6 j = jitter.at(t);
        const Vec3 pos = o.pivot + Vec3(0.5 * o.sweep_extent_mm * std::sin(ph), 0.0, 0.0) + j.head<3>();
        const Quat q = rotation_about(Vec3::UnitZ(), deg_to_rad(o.fan_deg) * std::sin(ph)) * base *
                       rotation_from_vector(j.tail<3>());
        out.push_back(t, RigidTransform(q, pos));
      }
      break;
    }
    case TrajectoryKind::kRotationOnly: {
      const auto jitter = random_spline(rng, duration_s, interval, 0.0, deg_to_rad(o.tilt_jitter_deg));
      for (long i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        const double pan = deg_to_rad(o.pan_deg) * std::sin(2.0 * kPi * t / o.pan_period_s);
        const Quat q = rotation_about(Vec3::UnitZ(), pan) * base * rotation_from_vector(jitter.at(t).tail<3>());
        out.push_back(t, RigidTransform(q, o.pivot));
      }
      break;
    }
    case TrajectoryKind::kFreehand: {
      const auto path = random_spline(rng, duration_s, interval, o.freehand_translation_mm,
                                      deg_to_rad(o.freehand_rotation_deg));
      for (long i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        const Vec6 v = path.at(t);
        out.push_back(t, RigidTransform(base * rotation_from_vector(v.tail<3>()), o.pivot + v.head<3>()));
      }
      break;
    }
  }
  return out;
}

RenderedFrame render_stereo_frame(const Scene& scene, const RigidTransform& camera_pose_world,
                                  const StereoRig& rig, const NoiseModel& noise, std::uint64_t seed,
                                  const RenderOptions& options) {
  noise.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t nl = scene.landmarks.size();

  RenderedFrame out;
  for (const auto& lm : scene.landmarks) {
    const Vec3 xl = camera_pose_world.apply_inverse(lm.position);
    const double range = xl.norm();
    if (!(xl.z() > 1e-9) || range < options.min_range_mm || range > options.max_range_mm) continue;
    const Vec2 pl = project(rig.left, xl);
    if (!rig.left.in_image(pl)) continue;
    const Vec3 xr = rig.t_left_right.apply_inverse(xl);
    std::optional<Vec2> pr;
    if (xr.z() > 1e-9) {
      const Vec2 p = project(rig.right, xr);
      if (rig.right.in_image(p)) pr = p;
    }
    // Fixed draw order per visible landmark keeps streams reproducible.
    const double detect = uni(rng);
    const Vec2 nl_px(gauss(rng), gauss(rng));
    const Vec2 nr_px(gauss(rng), gauss(rng));
    const double corrupt = uni(rng);
    const double pick = uni(rng);
    if (detect >= noise.detection_prob) continue;

    FeatureObservation obs;
    obs.feature_id = lm.id;
    obs.px_left = pl + noise.pixel_sigma * nl_px;
    if (pr) obs.px_right = *pr + noise.pixel_sigma * nr_px;
    bool outlier = false;
    if (corrupt < noise.id_corruption_prob && nl > 1) {
      // Replace with a different scene id.
      auto k = static_cast<std::size_t>(pick * static_cast<double>(nl - 1));
      k = std::min(k, nl - 2);
      const std::size_t self = static_cast<std::size_t>(&lm - scene.landmarks.data());
      if (k >= self) ++k;
      obs.feature_id = scene.landmarks[k].id;
      outlier = true;
    }
    out.observations.push_back(obs);
    out.is_outlier.push_back(outlier);
    out.true_ids.push_back(lm.id);
  }
  return out;
}

TimedPoseStream simulate_ots(const TimedPoseStream& flange_in_base, const RigSetup& rig_setup,
                             const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  if (flange_in_base.empty()) fail(ErrorCode::kInvalidArgument, "empty trajectory");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const RigidTransform base_to_tracker = rig_setup.t_rb_ots.inverse();
  const double rot_sigma = deg_to_rad(noise.ots_rot_sigma);
  TimedPoseStream out("ots");
  const double t0 = flange_in_base.start_time();
  const double t1 = flange_in_base.end_time();
  for (long k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) / noise.ots_rate;
    if (t > t1 + 1e-12) break;
    const RigidTransform marker = base_to_tracker * pose_at(flange_in_base, std::min(t, t1)) * rig_setup.t_ee_marker;
    const Vec3 dt(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 dr(gauss(rng), gauss(rng), gauss(rng));
    const RigidTransform perturbed(marker.rotation() * rotation_from_vector(rot_sigma * dr),
                                   marker.translation() + noise.ots_trans_sigma * dt);
    out.push_back(t + noise.ots_latency, perturbed);
  }
  return out;
}

UsImage render_us_frame(const SpherePhantom& phantom, const RigidTransform& probe_pose_world,
                        const RigidTransform& t_rgb_us, const UsImageSpec& spec, std::uint64_t seed) {
  if (!(spec.spacing.x() > 0.0 && spec.spacing.y() > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "US pixel spacing must be positive");
  }
  if (spec.width <= 0 || spec.height <= 0) fail(ErrorCode::kInvalidArgument, "US image size must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const RigidTransform us_to_world = probe_pose_world * t_rgb_us;
  const double band = std::max(phantom.band_mm, 1e-9);

  UsImage img;
  img.width = spec.width;
  img.height = spec.height;
  img.spacing = spec.spacing;
  img.pixels.resize(static_cast<std::size_t>(spec.width) * spec.height);
  for (int v = 0; v < spec.height; ++v) {
    for (int u = 0; u < spec.width; ++u) {
      const Vec3 p = us_to_world.apply(Vec3(u * spec.spacing.x(), v * spec.spacing.y(), 0.0));
      const double d = (p - phantom.center).norm();
      const double s = std::clamp((phantom.radius + 0.5 * band - d) / band, 0.0, 1.0);
      double value = phantom.outside + (phantom.inside - phantom.outside) * s;
      if (phantom.speckle_sigma > 0.0) value *= 1.0 + phantom.speckle_sigma * gauss(rng);
      img.pixels[static_cast<std::size_t>(v) * spec.width + u] =
          static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  return img;
}

}  // namespace insideout

namespace insideout {

std::vector<PlanarView> simulate_planar_views(const CameraIntrinsics& cam, int n_views, double pixel_sigma,
                                              std::uint64_t seed, const PlanarTargetOptions& o,
                                              std::vector<RigidTransform>* target_in_camera) {
  cam.validate();
  if (n_views < 1 || o.cols < 2 || o.rows < 2 || !(o.pitch_mm > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "bad planar target setup");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec2 centroid(0.5 * (o.cols - 1) * o.pitch_mm, 0.5 * (o.rows - 1) * o.pitch_mm);

  std::vector<PlanarView> views;
  if (target_in_camera) target_in_camera->clear();
  for (int v = 0; v < n_views; ++v) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) fail(ErrorCode::kInternal, "could not place planar target in view");
      const double tilt = deg_to_rad(o.max_tilt_deg) * (0.25 + 0.75 * uni(rng));
      const double dir = 2.0 * kPi * uni(rng);
      const double spin = deg_to_rad(30.0) * (2.0 * uni(rng) - 1.0);
      const double dist = o.min_distance_mm + (o.max_distance_mm - o.min_distance_mm) * uni(rng);
      const Vec3 center(60.0 * (2.0 * uni(rng) - 1.0), 40.0 * (2.0 * uni(rng) - 1.0), dist);
      const Quat r = rotation_about(Vec3(std::cos(dir), std::sin(dir), 0.0), tilt) *
                     rotation_about(Vec3::UnitZ(), spin);
      const RigidTransform pose(r, center - r * Vec3(centroid.x(), centroid.y(), 0.0));

      PlanarView view;
      bool ok = true;
      for (int y = 0; y < o.rows && ok; ++y) {
        for (int x = 0; x < o.cols; ++x) {
          const Vec2 g(x * o.pitch_mm, y * o.pitch_mm);
          const Vec3 pc = pose.apply(Vec3(g.x(), g.y(), 0.0));
          if (!(pc.z() > 1.0)) {
            ok = false;
            break;
          }
          const Vec2 px = project(cam, pc);
          if (!cam.in_image(px)) {
            ok = false;
            break;
          }
          view.grid_points.push_back(g);
          view.image_points.push_back(px);
        }
      }
      if (!ok) continue;
      for (auto& px : view.image_points) {
        const Vec2 n(gauss(rng), gauss(rng));
        px += pixel_sigma * n;
      }
      views.push_back(std::move(view));
      if (target_in_camera) target_in_camera->push_back(pose);
      break;
    }
  }
  return views;
}

UsCalibrationInput simulate_us_points(const RigidTransform& probe_from_image, const UsImageSpec& image,
                                      int n_points, double tip_sigma_mm, double pixel_sigma,
                                      std::uint64_t seed) {
  if (n_points < 1) fail(ErrorCode::kInvalidArgument, "need at least one calibration point");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  UsCalibrationInput in;
  in.pixel_spacing = image.spacing;
  for (int i = 0; i < n_points; ++i) {
    const Vec3 rv(gauss(rng), gauss(rng), gauss(rng));
    const RigidTransform probe(rotation_from_vector(0.5 * rv),
                               Vec3(400.0 * (2.0 * uni(rng) - 1.0), 400.0 * (2.0 * uni(rng) - 1.0),
                                    800.0 + 400.0 * uni(rng)));
    const Vec2 px(uni(rng) * (image.width - 1), uni(rng) * (image.height - 1));
    const Vec3 plane(px.x() * image.spacing.x(), px.y() * image.spacing.y(), 0.0);
    const Vec3 tip = probe.apply(probe_from_image.apply(plane));
    const Vec3 nt(gauss(rng), gauss(rng), gauss(rng));
    const Vec2 np(gauss(rng), gauss(rng));
    in.stylus_tips.push_back(tip + tip_sigma_mm * nt);
    in.image_points.push_back(px + pixel_sigma * np);
    in.probe_poses.push_back(probe);
  }
  return in;
}

}  // namespace insideout
