#include <gtest/gtest.h>

#include <filesystem>

#include "insideout/error.hpp"
#include "insideout/pipeline.hpp"
#include "testgen.hpp"

using namespace insideout;
namespace fs = std::filesystem;

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

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("insideout_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig short_config(double duration_s = 6.0) {
  ExperimentConfig c;
  c.duration_s = duration_s;
  c.ultrasound.duration_s = 2.0;
  return c;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
  return out;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.seed = 77;
  c.trajectory_kind = TrajectoryKind::kFreehand;
  c.noise.pixel_sigma = 0.125;
  c.setup.t_rb_ots = testgen::Gen(3).pose();
  const auto text = c.to_json();
  const auto back = ExperimentConfig::from_json(text);
  EXPECT_EQ(back.to_json(), text);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.trajectory_kind, TrajectoryKind::kFreehand);
  EXPECT_EQ(back.noise.pixel_sigma, 0.125);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = ExperimentConfig::from_json(R"({"noise": {"pixel_sigma": 0.5}, "scene": {"landmarks": 42}})");
  EXPECT_EQ(c.noise.pixel_sigma, 0.5);
  EXPECT_EQ(c.landmarks, 42);
  EXPECT_EQ(c.to_json(), [] {
    ExperimentConfig d;
    d.noise.pixel_sigma = 0.5;
    d.landmarks = 42;
    return d.to_json();
  }());
}

TEST(Config, Rejects) {
  EXPECT_EQ(code_of([] { ExperimentConfig::from_json(R"({"noise": {"pixel_sigmaa": 0.5}})"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { ExperimentConfig::from_json("[1, 2]"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { ExperimentConfig::from_json("{"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { ExperimentConfig::from_json(R"({"seed": "one"})"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { ExperimentConfig::from_json(R"({"trajectory": {"kind": "spiral"}})"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { ExperimentConfig::from_json(R"({"rig": {"baseline_mm": 0}})"); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { load_config("/nonexistent/insideout/config.json"); }), ErrorCode::kIo);
}

TEST(Config, TrajectoryNames) {
  for (auto k : {TrajectoryKind::kSweep, TrajectoryKind::kRotationOnly, TrajectoryKind::kFreehand})
    EXPECT_EQ(parse_trajectory_kind(trajectory_kind_name(k)), k);
}

TEST(Simulate, CameraFollowsFlange) {
  const auto c = short_config(2.0);
  const auto s = simulate_sequence(c);
  ASSERT_EQ(s.robot.size(), 60u);
  ASSERT_EQ(s.frames.size(), 60u);
  ASSERT_EQ(s.camera.size(), 60u);
  const Mat4 mount = testgen::matrix_of(c.setup.t_ee_rgb) * testgen::matrix_of(c.setup.t_rgb_stereo);
  for (std::size_t i = 0; i < s.robot.size(); ++i) {
    const Mat4 expected = testgen::matrix_of(s.robot[i].pose) * mount;
    EXPECT_LE((testgen::matrix_of(s.camera[i].pose) - expected).norm(), 1e-9);
    EXPECT_EQ(s.frames[i].t, s.robot[i].t);
  }
  ASSERT_TRUE(s.chain.t_rb_ir1_0);
  EXPECT_EQ(s.chain.t_rb_ir1_0->translation(), s.camera[0].pose.translation());
  EXPECT_GT(s.frames[0].observations.size(), 100u);
}

TEST(Simulate, SeedChangesEverything) {
  auto c = short_config(1.0);
  const auto a = simulate_sequence(c);
  c.seed = 2;
  const auto b = simulate_sequence(c);
  EXPECT_NE(a.scene.landmarks[0].position, b.scene.landmarks[0].position);
  EXPECT_NE(a.robot[5].pose.translation(), b.robot[5].pose.translation());
  c.seed = 1;
  const auto a2 = simulate_sequence(c);
  EXPECT_EQ(io::format_observations(a.frames), io::format_observations(a2.frames));
}

TEST(EndToEnd, ZeroNoiseChainCloses) {
  auto c = short_config(10.0);
  c.noise = NoiseModel::noiseless();
  c.noise.ots_rate = c.frame_rate_hz;
  const auto s = simulate_sequence(c);
  const auto vo = run_tracking(s.rig, s.frames, c.vo);
  EXPECT_EQ(vo.stats.frames_lost, 0);
  SequenceInput seq{"seq", s.robot, {{"slam", SourceKind::kSlam, vo.trajectory, 0}, {"ots", SourceKind::kOts, s.ots, 0}}, {}};
  const auto report = make_report(std::span(&seq, 1), s.chain);
  const auto* slam = report.find("slam");
  const auto* ots = report.find("ots");
  ASSERT_TRUE(slam && ots);
  EXPECT_EQ(slam->pose_count, 300);
  EXPECT_LE(slam->translation_rms_mm, 1e-6);
  EXPECT_LE(slam->axis_mean_deg + slam->axis_std_deg, 1e-6);
  EXPECT_EQ(ots->pose_count, 300);
  EXPECT_LE(ots->translation_rms_mm, 1e-9);
  EXPECT_LE(ots->geodesic_mean_deg, 1e-9);
}

TEST(EndToEnd, UltrasoundSweepRecoversPhantom) {
  auto c = short_config();
  c.ultrasound.duration_s = 8.0;
  const auto us = simulate_us_sweep(c);
  const auto clean = compound(us.frames, us.truth, c.setup.t_rgb_us, us.volume);
  const double iso = 0.5 * (us.phantom.inside + us.phantom.outside);
  const auto fit = fit_sphere(clean.volume, iso);
  EXPECT_NEAR(fit.radius, us.phantom.radius, 0.02 * us.phantom.radius);
  EXPECT_LE(fit.rms_residual, c.ultrasound.volume_spacing_mm);
  EXPECT_LE((fit.center - us.phantom.center).norm(), c.ultrasound.volume_spacing_mm);
  EXPECT_EQ(clean.frames_skipped, 0);
}

TEST(Commands, SimulateIsByteDeterministic) {
  const auto c = short_config(1.0);
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  RunOptions ra, rb;
  ra.output_dir = a;
  rb.output_dir = b;
  cmd_simulate(c, ra);
  cmd_simulate(c, rb);
  const auto ta = tree(a);
  const auto tb = tree(b);
  EXPECT_GT(ta.size(), 15u);
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, bytes] : ta) {
    ASSERT_TRUE(tb.count(name)) << name;
    EXPECT_TRUE(tb.at(name) == bytes) << name;
  }
}

TEST(Commands, SeedFlagOverridesConfig) {
  const auto c = short_config(1.0);
  const auto dir = scratch("seed");
  RunOptions r;
  r.output_dir = dir;
  r.seed = 99;
  const auto summary = cmd_simulate(c, r);
  EXPECT_NE(summary.find("seed: 99"), std::string::npos);
  EXPECT_EQ(load_config(dir / "config.json").seed, 99u);
}

TEST(Commands, SimulatedFilesFeedEveryCommand) {
  auto c = short_config(20.0);
  c.trajectory_kind = TrajectoryKind::kFreehand;
  const auto dir = scratch("flow");
  RunOptions r;
  r.output_dir = dir;
  cmd_simulate(c, r);

  const auto track = cmd_track(c, dir / "observations.csv", dir / "rig.json", r);
  EXPECT_NE(track.find("frames_lost: 0"), std::string::npos) << track;
  EXPECT_TRUE(fs::exists(dir / "vo.csv"));

  const auto he = cmd_calibrate_handeye(c, dir / "handeye_pairs.csv", false, r);
  EXPECT_NE(he.find("pairs_used"), std::string::npos);
  const auto cam = cmd_calibrate_camera(c, dir / "camera_views.csv", r);
  EXPECT_NE(cam.find("fx: 61"), std::string::npos) << cam;
  const auto usc = cmd_calibrate_us(dir / "us_points.csv", c.ultrasound.image.spacing, r);
  EXPECT_NE(usc.find("fre_mm"), std::string::npos);

  RunOptions csv = r;
  csv.format = OutputFormat::kCsv;
  const auto sync = cmd_sync(c, dir / "gt_robot.csv", dir / "ots.csv", csv);
  ASSERT_EQ(sync.rfind("key,value\noffset_s,", 0), 0u) << sync;
  const double offset = std::stod(sync.substr(std::string("key,value\noffset_s,").size()));
  EXPECT_NEAR(offset, c.noise.ots_latency, 1e-3);

  const auto comp = cmd_compound(c, dir / "us_frames.csv", dir / "us_tracking.csv", dir / "rig.json",
                                 dir / "volume_spec.json", true, std::nullopt, r);
  EXPECT_NE(comp.find("sphere_radius_mm"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "volume.raw"));

  const std::vector<EvaluateSource> sources{{"slam", SourceKind::kSlam, dir / "vo.csv"}};
  const auto table = cmd_evaluate(c, dir / "gt_robot.csv", sources, dir / "chain.json", "", r);
  EXPECT_NE(table.find("slam"), std::string::npos);
  const auto report = report_from_csv(io::read_text(dir / "report.csv"));
  ASSERT_NE(report.find("slam"), nullptr);
  EXPECT_LT(report.find("slam")->translation_rms_mm, 10.0);
}

TEST(Commands, Errors) {
  const ExperimentConfig c;
  const auto dir = scratch("errors");
  RunOptions r;
  r.output_dir = dir;
  EXPECT_EQ(code_of([&] { cmd_evaluate(c, dir / "gt.csv", {}, dir / "chain.json", "", r); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { cmd_sync(c, dir / "missing_a.csv", dir / "missing_b.csv", r); }), ErrorCode::kIo);
  io::write_text(dir / "empty_obs.csv", "frame,timestamp_s,feature_id,u_left,v_left,u_right,v_right\n");
  EXPECT_EQ(code_of([&] { cmd_track(c, dir / "empty_obs.csv", "", r); }), ErrorCode::kInsufficientData);
  EXPECT_EQ(code_of([&] {
              cmd_compound(c, dir / "f.csv", dir / "t.csv", "", dir / "v.json", false, std::nullopt, r);
            }),
            ErrorCode::kIo);
}
