#include "insideout/usfuse.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "insideout/error.hpp"

namespace insideout {

TimedPoseStream::TimedPoseStream(std::string source, std::vector<TimedPose> samples)
    : source_(std::move(source)) {
  samples_.reserve(samples.size());
  for (auto& s : samples) push_back(s.t, s.pose);
}

void TimedPoseStream::push_back(double t, const RigidTransform& pose) {
  if (!std::isfinite(t)) fail(ErrorCode::kInvalidArgument, "non-finite timestamp");
  if (!samples_.empty() && !(t > samples_.back().t)) {
    fail(ErrorCode::kInvalidArgument, "timestamps must be strictly increasing");
  }
  samples_.push_back({t, pose});
}

RigidTransform pose_at(const TimedPoseStream& stream, double t) {
  if (!stream.covers(t)) {
    fail(ErrorCode::kOutOfRange, "time " + std::to_string(t) + " s outside the tracked interval");
  }
  const auto& s = stream.samples();
  auto it = std::upper_bound(s.begin(), s.end(), t,
                             [](double v, const TimedPose& p) { return v < p.t; });
  if (it == s.end()) return s.back().pose;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  if (t == lo.t) return lo.pose;
  const double alpha = (t - lo.t) / (hi.t - lo.t);
  return interpolate(lo.pose, hi.pose, std::clamp(alpha, 0.0, 1.0));
}

TimedPoseStream shift_time(const TimedPoseStream& stream, double dt) {
  TimedPoseStream out(stream.source());
  for (const auto& s : stream.samples()) out.push_back(s.t + dt, s.pose);
  return out;
}

namespace {

// Angular speed sampled on a uniform grid starting at t0.
std::vector<double> angular_speed(const TimedPoseStream& s, double t0, double dt, std::size_t n,
                                  double baseline) {
  std::vector<double> out(n);
  const double h = 0.5 * baseline;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const RigidTransform a = pose_at(s, std::max(t - h, s.start_time()));
    const RigidTransform b = pose_at(s, std::min(t + h, s.end_time()));
    out[k] = geodesic_angle(a.rotation(), b.rotation()) / baseline;
  }
  return out;
}

double variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace

double estimate_latency(const TimedPoseStream& ref, const TimedPoseStream& target,
                        const LatencyOptions& options) {
  if (ref.size() < 2 || target.size() < 2) {
    fail(ErrorCode::kInsufficientData, "latency estimation needs at least two samples per stream");
  }
  if (!(options.sample_rate_hz > 0.0) || !(options.search_window_s >= 0.0) ||
      !(options.speed_baseline_s > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "invalid latency estimation options");
  }
  const double h = 0.5 * options.speed_baseline_s;
  const double lo = std::max(ref.start_time(), target.start_time()) + h;
  const double hi = std::min(ref.end_time(), target.end_time()) - h;
  if (!(hi - lo >= options.min_overlap_s)) {
    fail(ErrorCode::kInsufficientData, "streams overlap for less than the minimum duration");
  }
  const double dt = 1.0 / options.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / dt)) + 1;
  const auto a = angular_speed(ref, lo, dt, n, options.speed_baseline_s);
  const auto b = angular_speed(target, lo, dt, n, options.speed_baseline_s);
  if (variance(a) < options.min_speed_variance || variance(b) < options.min_speed_variance) {
    fail(ErrorCode::kUnobservable, "motion too static to observe latency");
  }

  const int max_lag = static_cast<int>(std::llround(options.search_window_s * options.sample_rate_hz));
  const int nn = static_cast<int>(n);
  if (2 * max_lag >= nn) fail(ErrorCode::kInsufficientData, "search window exceeds the overlap");

  // corr(L) pairs a[k] with b[k + L]; a positive peak means target lags ref.
  std::vector<double> corr(2 * max_lag + 1, -2.0);
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const int k0 = std::max(0, -lag);
    const int k1 = std::min(nn, nn - lag);
    const int m = k1 - k0;
    double sa = 0.0, sb = 0.0;
    for (int k = k0; k < k1; ++k) {
      sa += a[k];
      sb += b[k + lag];
    }
    const double ma = sa / m, mb = sb / m;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int k = k0; k < k1; ++k) {
      const double da = a[k] - ma;
      const double db = b[k + lag] - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    const double den = std::sqrt(saa * sbb);
    corr[lag + max_lag] = den > 0.0 ? sab / den : 0.0;
  }
  const auto best = static_cast<int>(std::max_element(corr.begin(), corr.end()) - corr.begin());
  double frac = 0.0;
  if (best > 0 && best + 1 < static_cast<int>(corr.size())) {
    const double cm = corr[best - 1], c0 = corr[best], cp = corr[best + 1];
    const double den = cm - 2.0 * c0 + cp;
    if (den < 0.0) frac = 0.5 * (cm - cp) / den;
  }
  return (static_cast<double>(best - max_lag) + frac) * dt;
}

void VolumeSpec::validate() const {
  for (int d : dims) {
    if (d <= 0) fail(ErrorCode::kInvalidArgument, "volume dimensions must be positive");
  }
  if (!(spacing.x() > 0.0 && spacing.y() > 0.0 && spacing.z() > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "volume spacing must be positive");
  }
}

Vec3 VolumeSpec::voxel_center(int i, int j, int k) const {
  const Vec3 local = origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  return orientation.apply(local);
}

VoxelVolume::VoxelVolume(const VolumeSpec& spec)
    : spec_(spec), accumulator_(spec.voxel_count(), 0.0), weight_(spec.voxel_count(), 0.0) {
  spec.validate();
}

std::size_t VoxelVolume::filled_count() const {
  return static_cast<std::size_t>(std::count_if(weight_.begin(), weight_.end(),
                                                [](double w) { return w > 0.0; }));
}

CompoundResult compound(std::span<const UsFrame> frames, const TimedPoseStream& tracking,
                        const RigidTransform& t_rgb_us, const VolumeSpec& spec,
                        const CompoundOptions& options) {
  spec.validate();
  // Integer accumulation keeps the result independent of frame order.
  std::vector<std::uint64_t> sum(spec.voxel_count(), 0);
  std::vector<std::uint64_t> count(spec.voxel_count(), 0);
  CompoundResult out;
  const RigidTransform world_to_volume = spec.orientation.inverse();
  bool any = false;
  for (const auto& frame : frames) {
    if (!tracking.covers(frame.t)) {
      ++out.frames_skipped;
      continue;
    }
    ++out.frames_used;
    const RigidTransform us_to_volume = world_to_volume * pose_at(tracking, frame.t) * t_rgb_us;
    const auto& img = frame.image;
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) {
        const Vec3 p(u * img.spacing.x(), v * img.spacing.y(), 0.0);
        const Vec3 c = (us_to_volume.apply(p) - spec.origin).cwiseQuotient(spec.spacing);
        const long i = std::lround(c.x());
        const long j = std::lround(c.y());
        const long k = std::lround(c.z());
        if (i < 0 || j < 0 || k < 0 || i >= spec.dims[0] || j >= spec.dims[1] || k >= spec.dims[2]) {
          continue;
        }
        const std::size_t idx =
            (static_cast<std::size_t>(k) * spec.dims[1] + static_cast<std::size_t>(j)) * spec.dims[0] +
            static_cast<std::size_t>(i);
        sum[idx] += img.at(u, v);
        ++count[idx];
        any = true;
      }
    }
  }
  if (!any) fail(ErrorCode::kEmptyVolume, "no frame intersects the output volume");
  out.volume = VoxelVolume(spec);
  for (std::size_t idx = 0; idx < sum.size(); ++idx) {
    if (count[idx] > 0) out.volume.set(idx, static_cast<double>(sum[idx]), static_cast<double>(count[idx]));
  }
  if (options.fill_holes) fill_holes(out.volume, options.hole_min_neighbors);
  return out;
}

void fill_holes(VoxelVolume& volume, int min_neighbors) {
  const auto& d = volume.spec().dims;
  const VoxelVolume snapshot = volume;
  static constexpr int kOffsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        const std::size_t idx = volume.index(i, j, k);
        if (snapshot.weight(idx) > 0.0) continue;
        int n = 0;
        double s = 0.0;
        for (const auto& o : kOffsets) {
          const int a = i + o[0], b = j + o[1], c = k + o[2];
          if (!volume.inside(a, b, c)) continue;
          const std::size_t nidx = volume.index(a, b, c);
          if (snapshot.weight(nidx) > 0.0) {
            s += snapshot.value(nidx);
            ++n;
          }
        }
        if (n >= min_neighbors) volume.set(idx, s / n, 1.0);
      }
    }
  }
}

SphereFit fit_sphere_points(std::span<const Vec3> points) {
  const auto n = points.size();
  if (n < 10) fail(ErrorCode::kInsufficientData, "sphere fit needs at least 10 boundary points");
  // |p|^2 = 2 c·p + (r^2 - |c|^2)
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.row(i) << 2.0 * points[i].x(), 2.0 * points[i].y(), 2.0 * points[i].z(), 1.0;
    b(i) = points[i].squaredNorm();
  }
  const Eigen::Vector4d sol = a.colPivHouseholderQr().solve(b);
  Vec3 c = sol.head<3>();
  double r2 = sol(3) + c.squaredNorm();
  if (!(r2 > 0.0)) fail(ErrorCode::kDegenerateGeometry, "algebraic sphere fit has no real radius");
  double r = std::sqrt(r2);

  for (int it = 0; it < 50; ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (const auto& p : points) {
      const Vec3 d = p - c;
      const double dn = d.norm();
      if (dn == 0.0) continue;
      Eigen::Vector4d j;
      j << -d / dn, -1.0;
      const double res = dn - r;
      jtj += j * j.transpose();
      jtr += j * res;
    }
    const Eigen::Vector4d step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    c += step.head<3>();
    r += step(3);
    if (step.norm() < 1e-12 * (1.0 + r)) break;
  }
  SphereFit out;
  out.center = c;
  out.radius = r;
  double sq = 0.0;
  for (const auto& p : points) {
    const double res = (p - c).norm() - r;
    sq += res * res;
  }
  out.rms_residual = std::sqrt(sq / static_cast<double>(n));
  out.boundary_voxels = static_cast<int>(n);
  return out;
}

SphereFit fit_sphere(const VoxelVolume& volume, double iso) {
  const auto& d = volume.spec().dims;
  static constexpr int kOffsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<Vec3> boundary;
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        const std::size_t idx = volume.index(i, j, k);
        if (!(volume.weight(idx) > 0.0) || volume.value(idx) < iso) continue;
        bool edge = false;
        for (const auto& o : kOffsets) {
          const int a = i + o[0], b = j + o[1], c = k + o[2];
          if (!volume.inside(a, b, c)) continue;
          const std::size_t nidx = volume.index(a, b, c);
          if (volume.weight(nidx) > 0.0 && volume.value(nidx) < iso) {
            edge = true;
            break;
          }
        }
        if (edge) boundary.push_back(volume.spec().voxel_center(i, j, k));
      }
    }
  }
  if (boundary.size() < 10) {
    fail(ErrorCode::kInsufficientData,
         "only " + std::to_string(boundary.size()) + " boundary voxels at the iso threshold");
  }
  return fit_sphere_points(boundary);
}

}  // namespace insideout
