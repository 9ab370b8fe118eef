#include "insideout/bench.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "insideout/error.hpp"

namespace insideout {

const char* source_kind_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::kSlam: return "slam";
    case SourceKind::kAruco: return "aruco";
    case SourceKind::kOts: return "ots";
  }
  return "unknown";
}

SourceKind parse_source_kind(const std::string& name) {
  if (name == "slam") return SourceKind::kSlam;
  if (name == "aruco") return SourceKind::kAruco;
  if (name == "ots") return SourceKind::kOts;
  fail(ErrorCode::kInvalidArgument, "unknown source kind '" + name + "' (expected slam, aruco or ots)");
}

namespace {

const RigidTransform& need(const std::optional<RigidTransform>& t, const char* name) {
  if (!t) fail(ErrorCode::kIncompleteChain, std::string("frame chain is missing ") + name);
  return *t;
}

struct Series {
  std::vector<Vec3> translation;
  std::vector<double> axis;
  std::vector<double> geodesic;
  long lost = 0;
  long excluded = 0;
};

void mean_std(const std::vector<double>& v, double* mean, double* sd) {
  *mean = 0.0;
  *sd = 0.0;
  if (v.empty()) return;
  for (double x : v) *mean += x;
  *mean /= static_cast<double>(v.size());
  for (double x : v) *sd += (x - *mean) * (x - *mean);
  *sd = std::sqrt(*sd / static_cast<double>(v.size()));
}

Series series_of(const AlignedStream& a, double floor_deg) {
  Series s;
  s.lost = a.lost_frames;
  for (const auto& r : a.residual) {
    s.translation.push_back(r.translation());
    s.geodesic.push_back(rad_to_deg(geodesic_angle(Quat::Identity(), r.rotation())));
  }
  std::vector<Quat> gq, eq;
  for (std::size_t i = 0; i < a.gt.size(); ++i) {
    gq.push_back(a.gt[i].rotation());
    eq.push_back(a.est[i].rotation());
  }
  if (!gq.empty()) {
    try {
      AxisDeviation ad = axis_deviation(gq, eq, floor_deg);
      s.axis = std::move(ad.deviation_deg);
      s.excluded = ad.excluded;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientData) throw;
      s.excluded = static_cast<long>(gq.size());
    }
  }
  return s;
}

MetricRow row_of(const std::string& source, const std::string& sequence, const Series& s) {
  MetricRow r;
  r.source = source;
  r.sequence = sequence;
  if (!s.translation.empty()) {
    const RmsStats t = translation_rms(s.translation);
    r.translation_rms_mm = t.rms;
    r.translation_std_mm = t.std;
  }
  mean_std(s.axis, &r.axis_mean_deg, &r.axis_std_deg);
  mean_std(s.geodesic, &r.geodesic_mean_deg, &r.geodesic_std_deg);
  r.pose_count = static_cast<long>(s.translation.size());
  r.lost_frames = s.lost;
  r.axis_excluded = s.excluded;
  return r;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RigidTransform rgb_in_base(SourceKind kind, const RigidTransform& sample, const FrameChainSpec& spec) {
  switch (kind) {
    case SourceKind::kSlam:
    case SourceKind::kAruco:
      return need(spec.t_rb_ir1_0, "t_rb_ir1_0") * sample * need(spec.t_rgb_stereo, "t_rgb_stereo").inverse();
    case SourceKind::kOts:
      return need(spec.t_rb_ots, "t_rb_ots") * sample * need(spec.t_ee_marker, "t_ee_marker").inverse() *
             need(spec.t_ee_rgb, "t_ee_rgb");
  }
  fail(ErrorCode::kInternal, "unhandled source kind");
}

std::vector<AlignedStream> to_common_frame(const TimedPoseStream& robot_gt, std::span<const SourceStream> sources,
                                           const FrameChainSpec& spec) {
  const RigidTransform& ee_rgb = need(spec.t_ee_rgb, "t_ee_rgb");
  // Resolve every chain up front so a gap is reported before any work.
  for (const auto& s : sources) rgb_in_base(s.kind, RigidTransform::identity(), spec);

  std::vector<AlignedStream> out;
  for (const auto& src : sources) {
    AlignedStream a;
    a.name = src.name;
    a.lost_frames = src.lost_frames;
    for (const auto& g : robot_gt.samples()) {
      if (!src.stream.covers(g.t)) {
        ++a.skipped;
        continue;
      }
      const RigidTransform gt = g.pose * ee_rgb;
      const RigidTransform est = rgb_in_base(src.kind, pose_at(src.stream, g.t), spec);
      a.t.push_back(g.t);
      a.gt.push_back(gt);
      a.est.push_back(est);
      a.residual.push_back(gt.inverse() * est);
    }
    out.push_back(std::move(a));
  }
  return out;
}

RmsStats translation_rms(std::span<const Vec3> residuals) {
  if (residuals.empty()) fail(ErrorCode::kInsufficientData, "translation RMS of an empty series");
  const double n = static_cast<double>(residuals.size());
  double sq = 0.0;
  double sum = 0.0;
  for (const auto& r : residuals) {
    sq += r.squaredNorm();
    sum += r.norm();
  }
  RmsStats s;
  s.rms = std::sqrt(sq / n);
  const double mean = sum / n;
  double var = 0.0;
  for (const auto& r : residuals) var += (r.norm() - mean) * (r.norm() - mean);
  s.std = std::sqrt(var / n);
  return s;
}

AxisDeviation axis_deviation(std::span<const Quat> gt, std::span<const Quat> est, double floor_deg) {
  if (gt.size() != est.size()) fail(ErrorCode::kInvalidArgument, "rotation series differ in length");
  if (!(floor_deg >= 0.0)) fail(ErrorCode::kInvalidArgument, "angle floor must be non-negative");
  AxisDeviation out;
  if (gt.empty()) fail(ErrorCode::kInsufficientData, "no rotation pairs");
  const double floor_rad = deg_to_rad(floor_deg);
  const Quat g0 = gt[0].conjugate();
  const Quat e0 = est[0].conjugate();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const AxisAngle ag = to_axis_angle(g0 * gt[i]);
    const AxisAngle ae = to_axis_angle(e0 * est[i]);
    if (ag.angle < floor_rad || ae.angle < floor_rad || ag.angle <= 1e-9 || ae.angle <= 1e-9) {
      ++out.excluded;
      continue;
    }
    out.deviation_deg.push_back(rad_to_deg(std::atan2(ag.axis.cross(ae.axis).norm(), ag.axis.dot(ae.axis))));
  }
  if (out.deviation_deg.empty()) {
    fail(ErrorCode::kInsufficientData, "every rotation pair fell below the axis angle floor");
  }
  return out;
}

const MetricRow* ErrorReport::find(const std::string& source, const std::string& sequence) const {
  for (const auto& r : rows) {
    if (r.source == source && r.sequence == sequence) return &r;
  }
  return nullptr;
}

ErrorReport make_report(std::span<const SequenceInput> sequences, const FrameChainSpec& spec,
                        const ReportConfig& config) {
  ErrorReport report;
  std::vector<std::string> order;
  std::map<std::string, Series> totals;
  std::vector<MetricRow> per_sequence;
  for (const auto& seq : sequences) {
    FrameChainSpec s = spec;
    if (seq.t_rb_ir1_0) s.t_rb_ir1_0 = seq.t_rb_ir1_0;
    auto aligned = to_common_frame(seq.robot, seq.sources, s);
    for (auto& a : aligned) {
      const Series ser = series_of(a, config.axis_floor_deg);
      per_sequence.push_back(row_of(a.name, seq.name, ser));
      if (!totals.count(a.name)) order.push_back(a.name);
      auto& tot = totals[a.name];
      tot.translation.insert(tot.translation.end(), ser.translation.begin(), ser.translation.end());
      tot.axis.insert(tot.axis.end(), ser.axis.begin(), ser.axis.end());
      tot.geodesic.insert(tot.geodesic.end(), ser.geodesic.begin(), ser.geodesic.end());
      tot.lost += ser.lost;
      tot.excluded += ser.excluded;
      report.aligned.push_back(std::move(a));
    }
  }
  for (const auto& name : order) report.rows.push_back(row_of(name, "all", totals[name]));
  report.rows.insert(report.rows.end(), per_sequence.begin(), per_sequence.end());
  return report;
}

std::string format_table(const ErrorReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-10s %22s %22s %22s %8s %6s\n", "source", "sequence",
                "translation [mm]", "axis deviation [deg]", "geodesic [deg]", "poses", "lost");
  os << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%-12s %-10s %10.3f +- %8.3f %10.3f +- %8.3f %10.3f +- %8.3f %8ld %6ld\n",
                  r.source.c_str(), r.sequence.c_str(), r.translation_rms_mm, r.translation_std_mm,
                  r.axis_mean_deg, r.axis_std_deg, r.geodesic_mean_deg, r.geodesic_std_deg, r.pose_count,
                  r.lost_frames);
    os << line;
  }
  return os.str();
}

std::string report_to_csv(const ErrorReport& report) {
  std::ostringstream os;
  os << "source,sequence,translation_rms_mm,translation_std_mm,axis_mean_deg,axis_std_deg,"
        "geodesic_mean_deg,geodesic_std_deg,pose_count,lost_frames,axis_excluded\n";
  for (const auto& r : report.rows) {
    os << r.source << ',' << r.sequence << ',' << fmt17(r.translation_rms_mm) << ','
       << fmt17(r.translation_std_mm) << ',' << fmt17(r.axis_mean_deg) << ',' << fmt17(r.axis_std_deg) << ','
       << fmt17(r.geodesic_mean_deg) << ',' << fmt17(r.geodesic_std_deg) << ',' << r.pose_count << ','
       << r.lost_frames << ',' << r.axis_excluded << '\n';
  }
  return os.str();
}

ErrorReport report_from_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  ErrorReport report;
  if (!std::getline(is, line)) fail(ErrorCode::kParse, "report CSV is empty");
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 11) fail(ErrorCode::kParse, "report CSV line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      MetricRow r;
      r.source = f[0];
      r.sequence = f[1];
      r.translation_rms_mm = std::stod(f[2]);
      r.translation_std_mm = std::stod(f[3]);
      r.axis_mean_deg = std::stod(f[4]);
      r.axis_std_deg = std::stod(f[5]);
      r.geodesic_mean_deg = std::stod(f[6]);
      r.geodesic_std_deg = std::stod(f[7]);
      r.pose_count = std::stol(f[8]);
      r.lost_frames = std::stol(f[9]);
      r.axis_excluded = std::stol(f[10]);
      report.rows.push_back(std::move(r));
    } catch (const std::exception&) {
      fail(ErrorCode::kParse, "report CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return report;
}

}  // namespace insideout
