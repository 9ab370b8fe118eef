/* insideout C API.
 *
 * All functions return an io_status. On failure, io_last_error() holds a
 * message for the calling thread until its next failing call. Poses are
 * rigid transforms: translation in mm, unit quaternion in (w, x, y, z) order.
 */
#ifndef INSIDEOUT_H
#define INSIDEOUT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(INSIDEOUT_BUILDING_LIBRARY)
#define INSIDEOUT_API __declspec(dllexport)
#else
#define INSIDEOUT_API __declspec(dllimport)
#endif
#else
#define INSIDEOUT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum io_status {
  IO_OK = 0,
  IO_INVALID_ARGUMENT = 1,
  IO_BEHIND_CAMERA = 2,
  IO_DEGENERATE_GEOMETRY = 3,
  IO_NO_CONVERGENCE = 4,
  IO_INSUFFICIENT_DATA = 5,
  IO_UNOBSERVABLE = 6,
  IO_INIT_FAILURE = 7,
  IO_NO_CONSENSUS = 8,
  IO_OUT_OF_RANGE = 9,
  IO_EMPTY_VOLUME = 10,
  IO_INCOMPLETE_CHAIN = 11,
  IO_IO_ERROR = 12,
  IO_PARSE_ERROR = 13,
  IO_INTERNAL = 14
} io_status;

typedef struct io_pose {
  double t[3];
  double q[4];
} io_pose;

typedef struct io_camera {
  double fx, fy, cx, cy, k1, k2;
  int width, height;
} io_camera;

typedef struct io_stereo_rig {
  io_camera left;
  io_camera right;
  io_pose t_left_right; /* right camera in the left camera frame */
} io_stereo_rig;

typedef struct io_observation {
  uint64_t feature_id;
  double u_left, v_left;
  double u_right, v_right;
  int has_right;
} io_observation;

typedef struct io_stream io_stream_t;
typedef struct io_session io_session_t;

INSIDEOUT_API const char* io_version(void);
INSIDEOUT_API const char* io_status_name(io_status status);
INSIDEOUT_API const char* io_last_error(void);

/* Rigid transforms. */
INSIDEOUT_API io_status io_pose_identity(io_pose* out);
INSIDEOUT_API io_status io_pose_compose(const io_pose* a, const io_pose* b, io_pose* out);
INSIDEOUT_API io_status io_pose_invert(const io_pose* a, io_pose* out);
INSIDEOUT_API io_status io_pose_interpolate(const io_pose* a, const io_pose* b, double alpha, io_pose* out);
INSIDEOUT_API io_status io_pose_geodesic_deg(const io_pose* a, const io_pose* b, double* out);
INSIDEOUT_API io_status io_pose_apply(const io_pose* a, const double point[3], double out[3]);

/* Camera model. */
INSIDEOUT_API io_status io_project(const io_camera* cam, const double point[3], double pixel[2]);
INSIDEOUT_API io_status io_unproject(const io_camera* cam, const double pixel[2], double ray[3]);
INSIDEOUT_API io_status io_triangulate(const io_stereo_rig* rig, const double px_left[2],
                                       const double px_right[2], double point[3]);
/* grid_xy and image_uv hold 2 doubles per point, views stored back to back;
 * view_sizes[i] is the point count of view i. */
INSIDEOUT_API io_status io_calibrate_camera(const double* grid_xy, const double* image_uv,
                                            const size_t* view_sizes, size_t n_views, int width,
                                            int height, io_camera* out, double* rms_px);

/* Registration. */
INSIDEOUT_API io_status io_hand_eye(const io_pose* a, const io_pose* b, size_t n, int eye_on_base,
                                    io_pose* x, double* rotation_residual_deg,
                                    double* translation_residual_mm);
/* p and q hold 3 doubles per point; finds T with q = T p. */
INSIDEOUT_API io_status io_rigid_register(const double* p, const double* q, size_t n, io_pose* out,
                                          double* fre_mm);

/* Timestamped pose streams. */
INSIDEOUT_API io_status io_stream_create(const char* source, io_stream_t** out);
INSIDEOUT_API io_status io_stream_load(const char* path, io_stream_t** out);
INSIDEOUT_API io_status io_stream_save(const io_stream_t* s, const char* path);
INSIDEOUT_API void io_stream_destroy(io_stream_t* s);
INSIDEOUT_API io_status io_stream_push(io_stream_t* s, double t, const io_pose* pose);
INSIDEOUT_API size_t io_stream_size(const io_stream_t* s);
INSIDEOUT_API io_status io_stream_get(const io_stream_t* s, size_t i, double* t, io_pose* pose);
INSIDEOUT_API io_status io_stream_pose_at(const io_stream_t* s, double t, io_pose* out);
INSIDEOUT_API io_status io_estimate_latency(const io_stream_t* ref, const io_stream_t* target,
                                            double* offset_s);

/* Stereo visual odometry. */
INSIDEOUT_API io_status io_session_init(const io_stereo_rig* rig, const io_observation* frame, size_t n,
                                        double t, uint64_t seed, io_session_t** out);
INSIDEOUT_API io_status io_session_track(io_session_t* s, const io_observation* frame, size_t n, double t,
                                         io_pose* pose, int* lost);
INSIDEOUT_API size_t io_session_map_size(const io_session_t* s);
/* Copies the tracked trajectory into a new stream owned by the caller. */
INSIDEOUT_API io_status io_session_trajectory(const io_session_t* s, io_stream_t** out);
INSIDEOUT_API void io_session_destroy(io_session_t* s);

/* Commands. Each writes files under output_dir; io_last_output() returns the
 * summary text of the last successful command on this thread. */
typedef struct io_run_options {
  const char* config_path; /* NULL for defaults */
  const char* output_dir;  /* NULL for "." */
  int format_csv;
  int has_seed;
  uint64_t seed;
} io_run_options;

typedef struct io_eval_source {
  const char* name;
  const char* kind; /* "slam", "aruco" or "ots" */
  const char* path;
} io_eval_source;

INSIDEOUT_API const char* io_last_output(void);
INSIDEOUT_API io_status io_cmd_simulate(const io_run_options* run);
INSIDEOUT_API io_status io_cmd_track(const io_run_options* run, const char* observations_csv,
                                     const char* rig_json);
INSIDEOUT_API io_status io_cmd_calibrate_handeye(const io_run_options* run, const char* pairs_csv,
                                                 int eye_on_base);
INSIDEOUT_API io_status io_cmd_calibrate_camera(const io_run_options* run, const char* views_csv);
INSIDEOUT_API io_status io_cmd_calibrate_us(const io_run_options* run, const char* points_csv,
                                            double spacing_x_mm, double spacing_y_mm);
INSIDEOUT_API io_status io_cmd_sync(const io_run_options* run, const char* ref_csv, const char* target_csv);
INSIDEOUT_API io_status io_cmd_compound(const io_run_options* run, const char* frames_csv,
                                        const char* tracking_csv, const char* calibration_json,
                                        const char* volume_json, int fit_sphere, int has_iso,
                                        double iso);
INSIDEOUT_API io_status io_cmd_evaluate(const io_run_options* run, const char* gt_csv,
                                        const io_eval_source* sources, size_t n_sources,
                                        const char* chain_json, const char* sequence);

#ifdef __cplusplus
}
#endif

#endif /* INSIDEOUT_H */
