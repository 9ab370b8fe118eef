#include <gtest/gtest.h>

#include "insideout/error.hpp"
#include "insideout/vostereo.hpp"
#include "testgen.hpp"

using namespace insideout;
using testgen::Gen;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

const StereoRig kRig = StereoRig::rectified(CameraIntrinsics{}, 50.0);

struct Point {
  std::uint64_t id;
  Vec3 world;
};

// Landmarks in the first camera's frame: a wide slab in front of it.
std::vector<Point> make_scene(Gen& g, int n, double half_width = 3000.0) {
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i)
    pts.push_back({static_cast<std::uint64_t>(i + 1),
                   Vec3(g.uniform(-half_width, half_width), g.uniform(-1500, 1500), g.uniform(1200, 4000))});
  return pts;
}

// Pinhole rendering written out independently of optics.cpp (the rig is
// distortion free).
std::vector<FeatureObservation> render(const std::vector<Point>& pts, const RigidTransform& cam, double sigma,
                                       Gen* g) {
  const auto& c = kRig.left;
  std::vector<FeatureObservation> out;
  const Eigen::Matrix4d w2c = testgen::matrix_of(cam).inverse();
  for (const auto& p : pts) {
    const Eigen::Vector4d xl = w2c * Eigen::Vector4d(p.world.x(), p.world.y(), p.world.z(), 1.0);
    if (xl.z() < 200.0) continue;
    const double ul = c.fx * xl.x() / xl.z() + c.cx, vl = c.fy * xl.y() / xl.z() + c.cy;
    const double ur = c.fx * (xl.x() - 50.0) / xl.z() + c.cx;
    if (ul < 0 || ul >= c.width || vl < 0 || vl >= c.height) continue;
    FeatureObservation o;
    o.feature_id = p.id;
    o.px_left = Vec2(ul, vl);
    if (ur >= 0) o.px_right = Vec2(ur, vl);
    if (g && sigma > 0.0) {
      o.px_left += sigma * Vec2(g->normal(), g->normal());
      if (o.px_right) *o.px_right += sigma * Vec2(g->normal(), g->normal());
    }
    out.push_back(o);
  }
  return out;
}

std::vector<RigidTransform> sweep_poses(int n, double extent_mm) {
  std::vector<RigidTransform> poses;
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / (n - 1);
    const Quat q = rotation_about(Vec3::UnitY(), deg_to_rad(15.0 * std::sin(2.0 * kPi * s)));
    poses.emplace_back(q, Vec3(extent_mm * s, 80.0 * std::sin(4.0 * kPi * s), 50.0 * s));
  }
  return poses;
}

std::vector<RigidTransform> pan_poses(int n, double amplitude_deg) {
  std::vector<RigidTransform> poses;
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / (n - 1);
    poses.emplace_back(rotation_about(Vec3::UnitY(), deg_to_rad(amplitude_deg * std::sin(2.0 * kPi * s))),
                       Vec3::Zero());
  }
  return poses;
}

struct RunResult {
  std::vector<TrackResult> results;
  TrackSession session;
};

// Noise keyed by (seed, frame, landmark), so runs over nested scenes share
// the noise of their common landmarks.
std::vector<FeatureObservation> render_keyed(const std::vector<Point>& pts, const RigidTransform& cam, double sigma,
                                             std::uint64_t noise_seed, std::uint64_t frame) {
  auto out = render(pts, cam, 0.0, nullptr);
  if (sigma <= 0.0) return out;
  for (auto& o : out) {
    Gen g(noise_seed * 0x9E3779B97F4A7C15ULL ^ (frame << 32) ^ o.feature_id);
    g.next();
    o.px_left += sigma * Vec2(g.normal(), g.normal());
    if (o.px_right) *o.px_right += sigma * Vec2(g.normal(), g.normal());
  }
  return out;
}

RunResult run(const std::vector<Point>& pts, const std::vector<RigidTransform>& poses, double sigma,
              std::uint64_t noise_seed, const VoOptions& opts = {}) {
  TrackSession s = TrackSession::init_map(kRig, render_keyed(pts, poses[0], sigma, noise_seed, 0), 0.0, opts);
  std::vector<TrackResult> results;
  for (std::size_t i = 1; i < poses.size(); ++i)
    results.push_back(s.track_frame(render_keyed(pts, poses[i], sigma, noise_seed, i), i / 30.0));
  return {std::move(results), std::move(s)};
}

double translation_rms(const TrackSession& s, const std::vector<RigidTransform>& poses) {
  const auto& traj = s.trajectory();
  double sum = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) sum += (traj[i].pose.translation() - poses[i].translation()).squaredNorm();
  return std::sqrt(sum / traj.size());
}

std::vector<PnpCorrespondence> correspondences(Gen& g, const RigidTransform& cam, int n, double sigma) {
  std::vector<PnpCorrespondence> cs;
  while (static_cast<int>(cs.size()) < n) {
    const Vec3 xc(g.uniform(-1500, 1500), g.uniform(-1000, 1000), g.uniform(1500, 4000));
    const Vec2 l = project(kRig.left, xc);
    const Vec2 r = project(kRig.right, xc - Vec3(50, 0, 0));
    if (!kRig.left.in_image(l)) continue;
    cs.push_back({cam.apply(xc), l + sigma * Vec2(g.normal(), g.normal()), r + sigma * Vec2(g.normal(), g.normal())});
  }
  return cs;
}

}  // namespace

TEST(InitMap, NoiselessLandmarksExact) {
  Gen g(1);
  auto pts = make_scene(g, 400, 1500.0);
  auto frame = render(pts, RigidTransform::identity(), 0.0, nullptr);
  frame.resize(100);
  const auto s = TrackSession::init_map(kRig, frame);
  ASSERT_EQ(s.map().size(), 100u);
  for (const auto& o : frame) {
    const auto& lm = s.map().at(o.feature_id);
    EXPECT_LE((lm.position_world - pts[o.feature_id - 1].world).norm(), 1e-6);
  }
  EXPECT_EQ(s.trajectory().size(), 1u);
  EXPECT_EQ(s.trajectory()[0].pose.translation(), Vec3::Zero());
  EXPECT_EQ(s.keyframes().size(), 1u);
}

TEST(InitMap, TooFewObservations) {
  Gen g(2);
  auto frame = render(make_scene(g, 400, 1500.0), RigidTransform::identity(), 0.0, nullptr);
  frame.resize(10);
  EXPECT_EQ(code_of([&] { TrackSession::init_map(kRig, frame); }), ErrorCode::kInitFailure);
}

TEST(InitMap, DegenerateMatchesSkipped) {
  Gen g(3);
  auto frame = render(make_scene(g, 400, 1500.0), RigidTransform::identity(), 0.0, nullptr);
  frame.resize(80);
  for (std::uint64_t k = 0; k < 5; ++k) {
    FeatureObservation o;
    o.feature_id = 100000 + k;
    o.px_left = Vec2(100.0 + 40 * k, 200.0);
    o.px_right = o.px_left;  // zero disparity: parallel rays
    frame.push_back(o);
  }
  const auto s = TrackSession::init_map(kRig, frame);
  EXPECT_EQ(s.map().size(), 80u);
  for (std::uint64_t k = 0; k < 5; ++k) EXPECT_EQ(s.map().count(100000 + k), 0u);
}

TEST(TrackFrame, NoiselessSweepExact) {
  Gen g(4);
  const auto pts = make_scene(g, 3000);
  const auto poses = sweep_poses(300, 1000.0);
  const auto r = run(pts, poses, 0.0, 0);
  const auto& traj = r.session.trajectory();
  ASSERT_EQ(traj.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto d = pose_delta(traj[i].pose, poses[i]);
    EXPECT_LE(d.translation_mm, 1e-6) << "frame " << i;
    EXPECT_LE(d.rotation_rad, 1e-7) << "frame " << i;
  }
  for (const auto& tr : r.results) EXPECT_FALSE(tr.lost);
}

TEST(TrackFrame, RotationOnlyNeverLost) {
  Gen g(5);
  const auto pts = make_scene(g, 4000, 5000.0);
  const auto poses = pan_poses(400, 40.0);
  const auto r = run(pts, poses, 0.3, 55);
  const auto& traj = r.session.trajectory();
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) worst = std::max(worst, pose_delta(traj[i].pose, poses[i]).rotation_rad);
  for (const auto& tr : r.results) {
    EXPECT_FALSE(tr.lost);
    EXPECT_GE(tr.associations, 200);
  }
  EXPECT_LT(rad_to_deg(worst), 0.5);
  EXPECT_EQ(r.session.status(), TrackStatus::kTracking);
}

TEST(TrackFrame, UnknownIdsLoseAndRecover) {
  Gen g(6);
  const auto pts = make_scene(g, 2000);
  const auto poses = sweep_poses(30, 100.0);
  auto s = TrackSession::init_map(kRig, render(pts, poses[0], 0.0, nullptr));
  s.track_frame(render(pts, poses[1], 0.0, nullptr), 1.0);
  const RigidTransform last = s.current_pose();

  auto unknown = render(pts, poses[2], 0.0, nullptr);
  for (auto& o : unknown) o.feature_id += 1000000;
  const auto lost = s.track_frame(unknown, 2.0);
  EXPECT_TRUE(lost.lost);
  EXPECT_EQ(s.status(), TrackStatus::kLost);
  EXPECT_EQ(pose_delta(lost.pose, last).translation_mm, 0.0);

  const auto back = s.track_frame(render(pts, poses[3], 0.0, nullptr), 3.0);
  EXPECT_FALSE(back.lost);
  EXPECT_EQ(s.status(), TrackStatus::kTracking);
  EXPECT_LE(pose_delta(back.pose, poses[3]).translation_mm, 1e-6);
  EXPECT_EQ(s.stats().frames_lost, 1);
}

TEST(TrackFrame, RejectsNonIncreasingTime) {
  Gen g(7);
  const auto pts = make_scene(g, 1000);
  auto s = TrackSession::init_map(kRig, render(pts, RigidTransform::identity(), 0.0, nullptr), 1.0);
  EXPECT_EQ(code_of([&] { s.track_frame(render(pts, RigidTransform::identity(), 0.0, nullptr), 1.0); }),
            ErrorCode::kInvalidArgument);
}

TEST(Ransac, ExactCorrespondences) {
  Gen g(8);
  const RigidTransform cam = g.pose(300.0);
  const auto cs = correspondences(g, cam, 100, 0.0);
  const auto r = ransac_pnp(cs, kRig, RigidTransform(cam.rotation() * rotation_about(Vec3::UnitX(), 0.02),
                                                     cam.translation() + Vec3(10, -5, 8)),
                            VoOptions{}, 1);
  for (bool b : r.inliers) EXPECT_TRUE(b);
  const auto d = pose_delta(r.pose, cam);
  EXPECT_LE(d.translation_mm, 1e-9);
  EXPECT_LE(d.rotation_rad, 1e-9);
}

TEST(Ransac, MismatchedIdsRejected) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Gen g(100 + seed);
    const RigidTransform cam = g.pose(300.0);
    const RigidTransform prior(cam.rotation() * rotation_about(g.unit3(), deg_to_rad(1.0)),
                               cam.translation() + g.normal3(10.0));
    auto cs = correspondences(g, cam, 200, 0.3);
    const auto clean = ransac_pnp(cs, kRig, prior, VoOptions{}, seed);

    // Rotate landmark positions among 30% of the correspondences.
    std::vector<bool> outlier(cs.size(), false);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (g.uniform() < 0.3) idx.push_back(i);
    const auto original = cs;
    for (std::size_t k = 0; k < idx.size(); ++k)
      cs[idx[k]].landmark_world = original[idx[(k + 1) % idx.size()]].landmark_world;
    for (std::size_t i : idx) outlier[i] = true;
    const auto r = ransac_pnp(cs, kRig, prior, VoOptions{}, seed);
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (outlier[i]) EXPECT_FALSE(r.inliers[i]) << "seed " << seed << " corr " << i;
    // Noise-consistent: the pose equals a refinement on the true inliers.
    std::vector<PnpCorrespondence> truth_inliers;
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (!outlier[i]) truth_inliers.push_back(cs[i]);
    const auto oracle = refine_pose(cam, truth_inliers, kRig);
    const auto d = pose_delta(r.pose, oracle.pose);
    EXPECT_LE(d.translation_mm, 1e-3) << "seed " << seed;
    EXPECT_LE(pose_delta(clean.pose, cam).translation_mm, 2.0) << "seed " << seed;
  }
}

TEST(Ransac, TooFewCorrespondences) {
  Gen g(9);
  const auto cs = correspondences(g, RigidTransform::identity(), 3, 0.0);
  EXPECT_EQ(code_of([&] { ransac_pnp(cs, kRig, RigidTransform::identity(), VoOptions{}, 0); }),
            ErrorCode::kInvalidArgument);
}

TEST(Ransac, NoConsensus) {
  Gen g(10);
  auto cs = correspondences(g, RigidTransform::identity(), 30, 0.0);
  for (auto& c : cs) c.landmark_world = g.vec3(2000.0) + Vec3(0, 0, 3000);
  EXPECT_EQ(code_of([&] { ransac_pnp(cs, kRig, RigidTransform::identity(), VoOptions{}, 0); }),
            ErrorCode::kNoConsensus);
}

TEST(Ransac, DeterministicInSeed) {
  Gen g(11);
  const RigidTransform cam = g.pose(300.0);
  auto cs = correspondences(g, cam, 150, 0.5);
  for (std::size_t i = 0; i < cs.size(); i += 4) cs[i].landmark_world += Vec3(300, 0, 0);
  const auto a = ransac_pnp(cs, kRig, cam, VoOptions{}, 42);
  const auto b = ransac_pnp(cs, kRig, cam, VoOptions{}, 42);
  EXPECT_EQ(a.pose.translation(), b.pose.translation());
  EXPECT_EQ(a.pose.rotation().coeffs(), b.pose.rotation().coeffs());
  EXPECT_EQ(a.inliers, b.inliers);
}

TEST(Refine, FixedPointAtTruth) {
  Gen g(12);
  const RigidTransform cam = g.pose(300.0);
  const auto cs = correspondences(g, cam, 50, 0.0);
  const auto r = refine_pose(cam, cs, kRig);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(pose_delta(r.pose, cam).translation_mm, 1e-9);
  EXPECT_LE(pose_delta(r.pose, cam).rotation_rad, 1e-12);
}

TEST(Refine, BasinOfConvergence) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Gen g(200 + seed);
    const RigidTransform cam = g.pose(300.0);
    const auto cs = correspondences(g, cam, 60, 0.0);
    const RigidTransform start(cam.rotation() * rotation_about(g.unit3(), deg_to_rad(2.0)),
                               cam.translation() + 5.0 * g.unit3());
    const auto r = refine_pose(start, cs, kRig);
    EXPECT_TRUE(r.converged);
    const auto d = pose_delta(r.pose, cam);
    EXPECT_LE(d.translation_mm, 1e-8) << "seed " << seed;
    EXPECT_LE(d.rotation_rad, 1e-8) << "seed " << seed;
    EXPECT_LE(r.final_rms, r.initial_rms);
  }
}

TEST(Refine, NoisyRmsNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Gen g(300 + seed);
    const RigidTransform cam = g.pose(300.0);
    const auto cs = correspondences(g, cam, 40, 1.0);
    const auto r = refine_pose(cam, cs, kRig);
    EXPECT_LE(r.final_rms, r.initial_rms) << "seed " << seed;
  }
}

TEST(Refine, TooFewPoints) {
  Gen g(13);
  const auto cs = correspondences(g, RigidTransform::identity(), 3, 0.0);
  EXPECT_EQ(code_of([&] { refine_pose(RigidTransform::identity(), cs, kRig); }), ErrorCode::kInvalidArgument);
}

TEST(Refine, JacobianMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Gen g(400 + seed);
    const RigidTransform cam = g.pose(300.0);
    const auto c = correspondences(g, cam, 1, 0.5)[0];
    Eigen::VectorXd r0;
    Eigen::Matrix<double, Eigen::Dynamic, 6> j;
    stereo_residual(cam, c, kRig, &r0, &j);
    ASSERT_EQ(r0.size(), 4);
    // Left-multiplied update of the world-to-camera transform.
    const RigidTransform w2c = cam.inverse();
    for (int k = 0; k < 6; ++k) {
      const double h = k < 3 ? 1e-3 : 1e-6;
      Eigen::Matrix<double, 6, 1> delta = Eigen::Matrix<double, 6, 1>::Zero();
      delta[k] = h;
      auto step = [&](double sign) {
        const RigidTransform upd(rotation_from_vector(sign * delta.tail<3>()), sign * delta.head<3>());
        Eigen::VectorXd r;
        stereo_residual((upd * w2c).inverse(), c, kRig, &r, nullptr);
        return r;
      };
      const Eigen::VectorXd fd = (step(1.0) - step(-1.0)) / (2.0 * h);
      EXPECT_LE((j.col(k) - fd).norm(), 1e-5 * std::max(1.0, fd.norm())) << "seed " << seed << " col " << k;
    }
  }
}

TEST(Keyframes, StaticCameraAddsNone) {
  Gen g(14);
  const auto pts = make_scene(g, 1500);
  const std::vector<RigidTransform> poses(60, RigidTransform::identity());
  const auto r = run(pts, poses, 0.3, 14);
  EXPECT_EQ(r.session.keyframes().size(), 1u);
  for (const auto& tr : r.results) EXPECT_FALSE(tr.keyframe_inserted);
}

TEST(Keyframes, SweepGrowsMap) {
  Gen g(15);
  const auto pts = make_scene(g, 5000, 4000.0);
  const auto poses = sweep_poses(400, 2500.0);
  const auto r = run(pts, poses, 0.0, 0);
  const auto initial = render(pts, poses[0], 0.0, nullptr).size();
  EXPECT_GT(r.session.keyframes().size(), 5u);
  EXPECT_GT(r.session.stats().landmarks_created, initial);
  for (const auto& tr : r.results) EXPECT_FALSE(tr.lost);
  // New landmarks land on ground truth.
  for (const auto& [id, lm] : r.session.map()) EXPECT_LE((lm.position_world - pts[id - 1].world).norm(), 1e-5);
}

TEST(Keyframes, NoisyLandmarksWithinTriangulationBound) {
  Gen g(16);
  const auto pts = make_scene(g, 5000, 4000.0);
  const auto poses = sweep_poses(300, 1500.0);
  const double sigma = 0.3;
  const auto r = run(pts, poses, sigma, 16);
  const double f = kRig.left.fx;
  for (const auto& [id, lm] : r.session.map()) {
    // Depth sigma of a stereo point plus pose error allowance.
    const double z = (poses.front().inverse().apply(pts[id - 1].world)).z();
    const double depth_sigma = z * z * std::sqrt(2.0) * sigma / (f * 50.0);
    EXPECT_LE((lm.position_world - pts[id - 1].world).norm(), 5.0 * depth_sigma + 20.0) << "id " << id;
  }
}

TEST(Properties, Deterministic) {
  Gen g(17);
  const auto pts = make_scene(g, 2000);
  const auto poses = sweep_poses(120, 800.0);
  const auto a = run(pts, poses, 0.5, 17);
  const auto b = run(pts, poses, 0.5, 17);
  const auto& ta = a.session.trajectory();
  const auto& tb = b.session.trajectory();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].pose.translation(), tb[i].pose.translation());
    EXPECT_EQ(ta[i].pose.rotation().coeffs(), tb[i].pose.rotation().coeffs());
  }
}

TEST(Properties, MetricScale) {
  Gen g(18);
  const auto pts = make_scene(g, 4000, 4000.0);
  const auto poses = sweep_poses(300, 1000.0);
  const auto r = run(pts, poses, 0.0, 0);
  const auto& traj = r.session.trajectory();
  double est = 0.0, truth = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    est += (traj[i].pose.translation() - traj[i - 1].pose.translation()).norm();
    truth += (poses[i].translation() - poses[i - 1].translation()).norm();
  }
  EXPECT_LE(std::abs(est / truth - 1.0), 1e-6);
}

TEST(Properties, MapReprojectionConsistency) {
  Gen g(19);
  const auto pts = make_scene(g, 4000, 4000.0);
  const double sigma = 0.3;
  const auto r = run(pts, sweep_poses(300, 1500.0), sigma, 19);
  const auto rms = r.session.landmark_reprojection_rms();
  ASSERT_FALSE(rms.empty());
  for (const auto& [id, v] : rms) EXPECT_LE(v, 3.0 * sigma) << "id " << id;
}

TEST(Properties, GracefulDegradation) {
  const auto poses = sweep_poses(120, 800.0);
  auto mean_rms = [&](int n_landmarks, double sigma) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Gen g(500 + seed);
      const auto pts = make_scene(g, n_landmarks);
      sum += translation_rms(run(pts, poses, sigma, 900 + seed).session, poses);
    }
    return sum / 10.0;
  };
  double previous = 0.0;
  for (double sigma : {0.1, 0.3, 1.0}) {
    const double v = mean_rms(1500, sigma);
    EXPECT_GE(v, previous) << "sigma " << sigma;
    previous = v;
  }
  previous = std::numeric_limits<double>::infinity();
  for (int n : {300, 600, 1200, 2400}) {
    const double v = mean_rms(n, 0.3);
    EXPECT_LE(v, previous) << "landmarks " << n;
    previous = v;
  }
}

