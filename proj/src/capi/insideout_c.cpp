#include "insideout/insideout.h"

#include <new>
#include <string>

#include "insideout/error.hpp"
#include "insideout/fileio.hpp"
#include "insideout/pipeline.hpp"

using namespace insideout;

struct io_stream {
  TimedPoseStream stream;
};

struct io_session {
  TrackSession session;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_output;

template <typename Fn>
io_status guard(Fn&& fn) {
  try {
    fn();
    return IO_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<io_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return IO_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return IO_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return IO_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

RigidTransform to_cpp(const io_pose* p) {
  need(p, "pose");
  const Quat q(p->q[0], p->q[1], p->q[2], p->q[3]);
  if (!(q.norm() > 1e-12)) fail(ErrorCode::kInvalidArgument, "zero quaternion");
  return RigidTransform(q, Vec3(p->t[0], p->t[1], p->t[2]));
}

void to_c(const RigidTransform& t, io_pose* out) {
  need(out, "output pose");
  for (int i = 0; i < 3; ++i) out->t[i] = t.translation()[i];
  out->q[0] = t.rotation().w();
  out->q[1] = t.rotation().x();
  out->q[2] = t.rotation().y();
  out->q[3] = t.rotation().z();
}

CameraIntrinsics to_cpp(const io_camera* c) {
  need(c, "camera");
  CameraIntrinsics k;
  k.fx = c->fx;
  k.fy = c->fy;
  k.cx = c->cx;
  k.cy = c->cy;
  k.k1 = c->k1;
  k.k2 = c->k2;
  k.width = c->width;
  k.height = c->height;
  k.validate();
  return k;
}

void to_c(const CameraIntrinsics& k, io_camera* out) {
  need(out, "output camera");
  *out = io_camera{k.fx, k.fy, k.cx, k.cy, k.k1, k.k2, k.width, k.height};
}

StereoRig to_cpp(const io_stereo_rig* r) {
  need(r, "rig");
  StereoRig rig{to_cpp(&r->left), to_cpp(&r->right), to_cpp(&r->t_left_right)};
  rig.validate();
  return rig;
}

std::vector<FeatureObservation> to_cpp(const io_observation* obs, std::size_t n) {
  if (n > 0) need(obs, "observations");
  std::vector<FeatureObservation> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].feature_id = obs[i].feature_id;
    out[i].px_left = Vec2(obs[i].u_left, obs[i].v_left);
    if (obs[i].has_right) out[i].px_right = Vec2(obs[i].u_right, obs[i].v_right);
  }
  return out;
}

std::string str_or(const char* s, const char* fallback = "") { return s != nullptr ? s : fallback; }

ExperimentConfig config_of(const io_run_options* run) {
  need(run, "run options");
  return run->config_path != nullptr ? load_config(run->config_path) : ExperimentConfig{};
}

RunOptions run_of(const io_run_options* run) {
  need(run, "run options");
  RunOptions r;
  r.output_dir = str_or(run->output_dir, ".");
  r.format = run->format_csv ? OutputFormat::kCsv : OutputFormat::kText;
  if (run->has_seed) r.seed = run->seed;
  return r;
}

}  // namespace

extern "C" {

const char* io_version(void) { return "0.1.0"; }

const char* io_status_name(io_status status) {
  if (status == IO_OK) return "ok";
  if (status < IO_INVALID_ARGUMENT || status > IO_INTERNAL) return "unknown";
  return error_category_name(static_cast<ErrorCode>(status)).data();
}

const char* io_last_error(void) { return g_last_error.c_str(); }

io_status io_pose_identity(io_pose* out) {
  return guard([&] { to_c(RigidTransform::identity(), out); });
}

io_status io_pose_compose(const io_pose* a, const io_pose* b, io_pose* out) {
  return guard([&] { to_c(compose(to_cpp(a), to_cpp(b)), out); });
}

io_status io_pose_invert(const io_pose* a, io_pose* out) {
  return guard([&] { to_c(invert(to_cpp(a)), out); });
}

io_status io_pose_interpolate(const io_pose* a, const io_pose* b, double alpha, io_pose* out) {
  return guard([&] { to_c(interpolate(to_cpp(a), to_cpp(b), alpha), out); });
}

io_status io_pose_geodesic_deg(const io_pose* a, const io_pose* b, double* out) {
  return guard([&] {
    need(out, "output");
    *out = rad_to_deg(geodesic_angle(to_cpp(a).rotation(), to_cpp(b).rotation()));
  });
}

io_status io_pose_apply(const io_pose* a, const double point[3], double out[3]) {
  return guard([&] {
    need(point, "point");
    need(out, "output");
    const Vec3 r = to_cpp(a).apply(Vec3(point[0], point[1], point[2]));
    for (int i = 0; i < 3; ++i) out[i] = r[i];
  });
}

io_status io_project(const io_camera* cam, const double point[3], double pixel[2]) {
  return guard([&] {
    need(point, "point");
    need(pixel, "output");
    const Vec2 px = project(to_cpp(cam), Vec3(point[0], point[1], point[2]));
    pixel[0] = px.x();
    pixel[1] = px.y();
  });
}

io_status io_unproject(const io_camera* cam, const double pixel[2], double ray[3]) {
  return guard([&] {
    need(pixel, "pixel");
    need(ray, "output");
    const Vec3 r = unproject(to_cpp(cam), Vec2(pixel[0], pixel[1]));
    for (int i = 0; i < 3; ++i) ray[i] = r[i];
  });
}

io_status io_triangulate(const io_stereo_rig* rig, const double px_left[2], const double px_right[2],
                         double point[3]) {
  return guard([&] {
    need(px_left, "left pixel");
    need(px_right, "right pixel");
    need(point, "output");
    const Vec3 p = triangulate(to_cpp(rig), Vec2(px_left[0], px_left[1]), Vec2(px_right[0], px_right[1]));
    for (int i = 0; i < 3; ++i) point[i] = p[i];
  });
}

io_status io_calibrate_camera(const double* grid_xy, const double* image_uv, const size_t* view_sizes,
                              size_t n_views, int width, int height, io_camera* out, double* rms_px) {
  return guard([&] {
    need(view_sizes, "view sizes");
    std::vector<PlanarView> views(n_views);
    std::size_t k = 0;
    for (std::size_t v = 0; v < n_views; ++v) {
      if (view_sizes[v] > 0) {
        need(grid_xy, "grid points");
        need(image_uv, "image points");
      }
      for (std::size_t i = 0; i < view_sizes[v]; ++i, ++k) {
        views[v].grid_points.emplace_back(grid_xy[2 * k], grid_xy[2 * k + 1]);
        views[v].image_points.emplace_back(image_uv[2 * k], image_uv[2 * k + 1]);
      }
    }
    const auto r = calibrate_intrinsics(views, width, height);
    to_c(r.intrinsics, out);
    if (rms_px != nullptr) *rms_px = r.rms_px;
  });
}

io_status io_hand_eye(const io_pose* a, const io_pose* b, size_t n, int eye_on_base, io_pose* x,
                      double* rotation_residual_deg, double* translation_residual_mm) {
  return guard([&] {
    if (n > 0) {
      need(a, "robot motions");
      need(b, "sensor motions");
    }
    std::vector<MotionPair> pairs;
    for (std::size_t i = 0; i < n; ++i) pairs.push_back({to_cpp(&a[i]), to_cpp(&b[i])});
    const auto r = eye_on_base ? hand_eye_eye_on_base(pairs) : hand_eye_tsai_lenz(pairs);
    to_c(r.x, x);
    if (rotation_residual_deg != nullptr) *rotation_residual_deg = r.rotation_residual_deg;
    if (translation_residual_mm != nullptr) *translation_residual_mm = r.translation_residual_mm;
  });
}

io_status io_rigid_register(const double* p, const double* q, size_t n, io_pose* out, double* fre_mm) {
  return guard([&] {
    if (n > 0) {
      need(p, "source points");
      need(q, "target points");
    }
    std::vector<PointCorrespondence> pts;
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back({Vec3(p[3 * i], p[3 * i + 1], p[3 * i + 2]), Vec3(q[3 * i], q[3 * i + 1], q[3 * i + 2])});
    }
    const auto r = rigid_register(pts);
    to_c(r.transform, out);
    if (fre_mm != nullptr) *fre_mm = r.fre;
  });
}

io_status io_stream_create(const char* source, io_stream_t** out) {
  return guard([&] {
    need(out, "output");
    *out = new io_stream{TimedPoseStream(str_or(source))};
  });
}

io_status io_stream_load(const char* path, io_stream_t** out) {
  return guard([&] {
    need(path, "path");
    need(out, "output");
    *out = new io_stream{io::load_pose_stream(path)};
  });
}

io_status io_stream_save(const io_stream_t* s, const char* path) {
  return guard([&] {
    need(s, "stream");
    need(path, "path");
    io::save_pose_stream(path, s->stream);
  });
}

void io_stream_destroy(io_stream_t* s) { delete s; }

io_status io_stream_push(io_stream_t* s, double t, const io_pose* pose) {
  return guard([&] {
    need(s, "stream");
    s->stream.push_back(t, to_cpp(pose));
  });
}

size_t io_stream_size(const io_stream_t* s) { return s != nullptr ? s->stream.size() : 0; }

io_status io_stream_get(const io_stream_t* s, size_t i, double* t, io_pose* pose) {
  return guard([&] {
    need(s, "stream");
    if (i >= s->stream.size()) fail(ErrorCode::kOutOfRange, "sample index past the end of the stream");
    if (t != nullptr) *t = s->stream[i].t;
    to_c(s->stream[i].pose, pose);
  });
}

io_status io_stream_pose_at(const io_stream_t* s, double t, io_pose* out) {
  return guard([&] {
    need(s, "stream");
    to_c(pose_at(s->stream, t), out);
  });
}

io_status io_estimate_latency(const io_stream_t* ref, const io_stream_t* target, double* offset_s) {
  return guard([&] {
    need(ref, "reference stream");
    need(target, "target stream");
    need(offset_s, "output");
    *offset_s = estimate_latency(ref->stream, target->stream);
  });
}

io_status io_session_init(const io_stereo_rig* rig, const io_observation* frame, size_t n, double t,
                          uint64_t seed, io_session_t** out) {
  return guard([&] {
    need(out, "output");
    VoOptions options;
    options.seed = seed;
    const auto obs = to_cpp(frame, n);
    *out = new io_session{TrackSession::init_map(to_cpp(rig), obs, t, options)};
  });
}

io_status io_session_track(io_session_t* s, const io_observation* frame, size_t n, double t, io_pose* pose,
                           int* lost) {
  return guard([&] {
    need(s, "session");
    const auto obs = to_cpp(frame, n);
    const auto r = s->session.track_frame(obs, t);
    if (pose != nullptr) to_c(r.pose, pose);
    if (lost != nullptr) *lost = r.lost ? 1 : 0;
  });
}

size_t io_session_map_size(const io_session_t* s) { return s != nullptr ? s->session.map().size() : 0; }

io_status io_session_trajectory(const io_session_t* s, io_stream_t** out) {
  return guard([&] {
    need(s, "session");
    need(out, "output");
    *out = new io_stream{s->session.trajectory()};
  });
}

void io_session_destroy(io_session_t* s) { delete s; }

const char* io_last_output(void) { return g_last_output.c_str(); }

io_status io_cmd_simulate(const io_run_options* run) {
  return guard([&] { g_last_output = cmd_simulate(config_of(run), run_of(run)); });
}

io_status io_cmd_track(const io_run_options* run, const char* observations_csv, const char* rig_json) {
  return guard([&] {
    need(observations_csv, "observations path");
    g_last_output = cmd_track(config_of(run), observations_csv, str_or(rig_json), run_of(run));
  });
}

io_status io_cmd_calibrate_handeye(const io_run_options* run, const char* pairs_csv, int eye_on_base) {
  return guard([&] {
    need(pairs_csv, "pairs path");
    g_last_output = cmd_calibrate_handeye(config_of(run), pairs_csv, eye_on_base != 0, run_of(run));
  });
}

io_status io_cmd_calibrate_camera(const io_run_options* run, const char* views_csv) {
  return guard([&] {
    need(views_csv, "views path");
    g_last_output = cmd_calibrate_camera(config_of(run), views_csv, run_of(run));
  });
}

io_status io_cmd_calibrate_us(const io_run_options* run, const char* points_csv, double spacing_x_mm,
                              double spacing_y_mm) {
  return guard([&] {
    need(points_csv, "points path");
    g_last_output = cmd_calibrate_us(points_csv, Vec2(spacing_x_mm, spacing_y_mm), run_of(run));
  });
}

io_status io_cmd_sync(const io_run_options* run, const char* ref_csv, const char* target_csv) {
  return guard([&] {
    need(ref_csv, "reference path");
    need(target_csv, "target path");
    g_last_output = cmd_sync(config_of(run), ref_csv, target_csv, run_of(run));
  });
}

io_status io_cmd_compound(const io_run_options* run, const char* frames_csv, const char* tracking_csv,
                          const char* calibration_json, const char* volume_json, int fit_sphere, int has_iso, double iso) {
  return guard([&] {
    need(frames_csv, "frames path");
    need(tracking_csv, "tracking path");
    need(volume_json, "volume spec path");
    std::optional<double> level;
    if (has_iso) level = iso;
    g_last_output = cmd_compound(config_of(run), frames_csv, tracking_csv, str_or(calibration_json), volume_json,
                                 fit_sphere != 0, level, run_of(run));
  });
}

io_status io_cmd_evaluate(const io_run_options* run, const char* gt_csv, const io_eval_source* sources,
                          size_t n_sources, const char* chain_json, const char* sequence) {
  return guard([&] {
    need(gt_csv, "ground truth path");
    need(chain_json, "chain path");
    if (n_sources > 0) need(sources, "sources");
    std::vector<EvaluateSource> srcs;
    for (std::size_t i = 0; i < n_sources; ++i) {
      need(sources[i].path, "source path");
      const std::string kind = str_or(sources[i].kind, "slam");
      srcs.push_back({str_or(sources[i].name, kind.c_str()), parse_source_kind(kind), sources[i].path});
    }
    g_last_output = cmd_evaluate(config_of(run), gt_csv, srcs, chain_json, str_or(sequence), run_of(run));
  });
}

}  // extern "C"
