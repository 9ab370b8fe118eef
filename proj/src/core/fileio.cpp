#include "insideout/fileio.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "insideout/error.hpp"
#include "json.hpp"

namespace insideout::io {

using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Calls fn(fields, line_no) for each data line; skips blanks, comments and a
// leading header row.
template <typename Fn>
void for_each_record(const std::string& text, std::size_t min_fields, Fn fn) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    if (first) {
      first = false;
      if (std::isalpha(static_cast<unsigned char>(line[start])) != 0) continue;
    }
    auto f = split(line);
    if (f.size() < min_fields) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected at least " +
                                  std::to_string(min_fields) + " fields, got " + std::to_string(f.size()));
    }
    try {
      fn(f, line_no);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": malformed number");
    }
  }
}

double num(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])) != 0) ++pos;
  if (pos != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

RigidTransform pose_from_fields(const std::vector<std::string>& f, std::size_t off) {
  return RigidTransform(Quat(num(f[off + 3]), num(f[off + 4]), num(f[off + 5]), num(f[off + 6])),
                        Vec3(num(f[off]), num(f[off + 1]), num(f[off + 2])));
}

std::string pose_fields(const RigidTransform& p) {
  const auto& t = p.translation();
  const auto& q = p.rotation();
  return fmt(t.x()) + ',' + fmt(t.y()) + ',' + fmt(t.z()) + ',' + fmt(q.w()) + ',' + fmt(q.x()) + ',' +
         fmt(q.y()) + ',' + fmt(q.z());
}

json pose_to_json(const RigidTransform& p) {
  const auto& t = p.translation();
  const auto& q = p.rotation();
  return json{{"t_mm", {t.x(), t.y(), t.z()}}, {"q_wxyz", {q.w(), q.x(), q.y(), q.z()}}};
}

RigidTransform pose_from_json(const json& j) {
  const auto& t = j.at("t_mm");
  const auto& q = j.at("q_wxyz");
  return RigidTransform(Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                             q.at(3).get<double>()),
                        Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()));
}

json camera_to_json(const CameraIntrinsics& c) {
  return json{{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"k1", c.k1},
              {"k2", c.k2}, {"width", c.width}, {"height", c.height}};
}

CameraIntrinsics camera_from_json(const json& j) {
  CameraIntrinsics c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.k1 = j.value("k1", 0.0);
  c.k2 = j.value("k2", 0.0);
  c.width = j.value("width", 640);
  c.height = j.value("height", 480);
  c.validate();
  return c;
}

template <typename Fn>
auto parse_json(const std::string& text, const char* what, Fn fn) {
  try {
    return fn(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string(what) + ": " + e.what());
  }
}

Vec3 vec3_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::string format_pose_stream(const TimedPoseStream& stream) {
  std::string out = "timestamp_s,tx_mm,ty_mm,tz_mm,qw,qx,qy,qz\n";
  for (const auto& s : stream.samples()) out += fmt(s.t) + ',' + pose_fields(s.pose) + '\n';
  return out;
}

TimedPoseStream parse_pose_stream(const std::string& text, const std::string& source) {
  TimedPoseStream out(source);
  for_each_record(text, 8, [&](const std::vector<std::string>& f, int line_no) {
    const double t = num(f[0]);
    if (!out.empty() && !(t > out.end_time())) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": timestamps must be strictly increasing");
    }
    out.push_back(t, pose_from_fields(f, 1));
  });
  return out;
}

TimedPoseStream load_pose_stream(const fs::path& path) {
  return parse_pose_stream(read_text(path), path.stem().string());
}

void save_pose_stream(const fs::path& path, const TimedPoseStream& stream) {
  write_text(path, format_pose_stream(stream));
}

std::string format_observations(const std::vector<ObservationFrame>& frames) {
  std::string out = "frame,timestamp_s,feature_id,u_left,v_left,u_right,v_right\n";
  for (const auto& fr : frames) {
    const std::string head = std::to_string(fr.index) + ',' + fmt(fr.t) + ',';
    for (const auto& o : fr.observations) {
      out += head + std::to_string(o.feature_id) + ',' + fmt(o.px_left.x()) + ',' + fmt(o.px_left.y()) + ',';
      if (o.px_right) out += fmt(o.px_right->x()) + ',' + fmt(o.px_right->y());
      else out += ',';
      out += '\n';
    }
  }
  return out;
}

std::vector<ObservationFrame> parse_observations(const std::string& text) {
  std::vector<ObservationFrame> frames;
  for_each_record(text, 5, [&](const std::vector<std::string>& f, int line_no) {
    const long idx = std::stol(f[0]);
    const double t = num(f[1]);
    if (frames.empty() || frames.back().index != idx) {
      if (!frames.empty() && idx < frames.back().index) {
        fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": frames must be in increasing order");
      }
      frames.push_back({idx, t, {}});
    }
    FeatureObservation o;
    o.feature_id = std::stoull(f[2]);
    o.px_left = Vec2(num(f[3]), num(f[4]));
    if (f.size() >= 7 && !f[5].empty() && !f[6].empty()) o.px_right = Vec2(num(f[5]), num(f[6]));
    frames.back().observations.push_back(o);
  });
  return frames;
}

std::vector<PlanarView> parse_planar_views(const std::string& text) {
  std::vector<PlanarView> views;
  std::vector<long> ids;
  for_each_record(text, 5, [&](const std::vector<std::string>& f, int) {
    const long id = std::stol(f[0]);
    std::size_t k = 0;
    while (k < ids.size() && ids[k] != id) ++k;
    if (k == ids.size()) {
      ids.push_back(id);
      views.emplace_back();
    }
    views[k].grid_points.emplace_back(num(f[1]), num(f[2]));
    views[k].image_points.emplace_back(num(f[3]), num(f[4]));
  });
  return views;
}

std::string format_planar_views(const std::vector<PlanarView>& views) {
  std::string out = "view_id,grid_x_mm,grid_y_mm,u_px,v_px\n";
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (std::size_t i = 0; i < views[v].grid_points.size(); ++i) {
      out += std::to_string(v) + ',' + fmt(views[v].grid_points[i].x()) + ',' + fmt(views[v].grid_points[i].y()) +
             ',' + fmt(views[v].image_points[i].x()) + ',' + fmt(views[v].image_points[i].y()) + '\n';
    }
  }
  return out;
}

std::vector<MotionPair> parse_motion_pairs(const std::string& text) {
  std::vector<MotionPair> out;
  for_each_record(text, 14, [&](const std::vector<std::string>& f, int) {
    out.push_back({pose_from_fields(f, 0), pose_from_fields(f, 7)});
  });
  return out;
}

std::string format_motion_pairs(const std::vector<MotionPair>& pairs) {
  std::string out = "a_tx,a_ty,a_tz,a_qw,a_qx,a_qy,a_qz,b_tx,b_ty,b_tz,b_qw,b_qx,b_qy,b_qz\n";
  for (const auto& p : pairs) out += pose_fields(p.a) + ',' + pose_fields(p.b) + '\n';
  return out;
}

UsCalibrationInput parse_us_points(const std::string& text, const Vec2& pixel_spacing) {
  UsCalibrationInput in;
  in.pixel_spacing = pixel_spacing;
  for_each_record(text, 12, [&](const std::vector<std::string>& f, int) {
    in.stylus_tips.emplace_back(num(f[0]), num(f[1]), num(f[2]));
    in.image_points.emplace_back(num(f[3]), num(f[4]));
    in.probe_poses.push_back(pose_from_fields(f, 5));
  });
  return in;
}

std::string format_us_points(const UsCalibrationInput& input) {
  std::string out = "tip_x,tip_y,tip_z,u_px,v_px,tx,ty,tz,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < input.stylus_tips.size(); ++i) {
    const auto& p = input.stylus_tips[i];
    out += fmt(p.x()) + ',' + fmt(p.y()) + ',' + fmt(p.z()) + ',' + fmt(input.image_points[i].x()) + ',' +
           fmt(input.image_points[i].y()) + ',' + pose_fields(input.probe_poses[i]) + '\n';
  }
  return out;
}

void save_us_frames(const fs::path& dir, const std::vector<UsFrame>& frames) {
  fs::create_directories(dir / "us");
  std::string index = "index,timestamp_s,width,height,spacing_x_mm,spacing_y_mm,file\n";
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.raw", i);
    const auto& img = frames[i].image;
    write_text(dir / "us" / name, std::string(img.pixels.begin(), img.pixels.end()));
    index += std::to_string(i) + ',' + fmt(frames[i].t) + ',' + std::to_string(img.width) + ',' +
             std::to_string(img.height) + ',' + fmt(img.spacing.x()) + ',' + fmt(img.spacing.y()) + ",us/" +
             name + '\n';
  }
  write_text(dir / "us_frames.csv", index);
}

std::vector<UsFrame> load_us_frames(const fs::path& index_csv) {
  const fs::path base = index_csv.parent_path();
  std::vector<UsFrame> frames;
  for_each_record(read_text(index_csv), 7, [&](const std::vector<std::string>& f, int line_no) {
    UsFrame fr;
    fr.t = num(f[1]);
    fr.image.width = std::stoi(f[2]);
    fr.image.height = std::stoi(f[3]);
    fr.image.spacing = Vec2(num(f[4]), num(f[5]));
    const std::string raw = read_text(base / f[6]);
    const auto expected = static_cast<std::size_t>(fr.image.width) * fr.image.height;
    if (raw.size() != expected) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + f[6] + " has " +
                                  std::to_string(raw.size()) + " bytes, expected " + std::to_string(expected));
    }
    fr.image.pixels.assign(raw.begin(), raw.end());
    frames.push_back(std::move(fr));
  });
  return frames;
}

void save_volume(const fs::path& dir, const std::string& stem, const VoxelVolume& volume) {
  const auto n = volume.spec().voxel_count();
  std::string values(n * sizeof(float), '\0');
  std::string weights(n * sizeof(float), '\0');
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<float>(volume.value(i));
    const auto w = static_cast<float>(volume.weight(i));
    std::memcpy(values.data() + i * sizeof(float), &v, sizeof(float));
    std::memcpy(weights.data() + i * sizeof(float), &w, sizeof(float));
  }
  write_text(dir / (stem + ".raw"), values);
  write_text(dir / (stem + "_weight.raw"), weights);
  json meta = json::parse(volume_spec_json(volume.spec()));
  meta["dtype"] = "float32";
  meta["byte_order"] = "little";
  meta["layout"] = "x fastest, then y, then z";
  meta["values_file"] = stem + ".raw";
  meta["weights_file"] = stem + "_weight.raw";
  meta["filled_voxels"] = volume.filled_count();
  write_text(dir / (stem + ".json"), meta.dump(2) + "\n");
}

std::string stereo_rig_json(const StereoRig& rig, const RigSetup& setup) {
  json j;
  j["stereo"] = {{"left", camera_to_json(rig.left)},
                 {"right", camera_to_json(rig.right)},
                 {"t_left_right", pose_to_json(rig.t_left_right)}};
  j["setup"] = {{"t_ee_rgb", pose_to_json(setup.t_ee_rgb)},
                {"t_rgb_stereo", pose_to_json(setup.t_rgb_stereo)},
                {"t_rb_ots", pose_to_json(setup.t_rb_ots)},
                {"t_ee_marker", pose_to_json(setup.t_ee_marker)},
                {"t_rgb_us", pose_to_json(setup.t_rgb_us)}};
  return j.dump(2) + "\n";
}

StereoRig parse_stereo_rig(const std::string& text) {
  return parse_json(text, "rig", [](const json& j) {
    const json& s = j.contains("stereo") ? j.at("stereo") : j;
    StereoRig rig{camera_from_json(s.at("left")), camera_from_json(s.at("right")),
                  pose_from_json(s.at("t_left_right"))};
    rig.validate();
    return rig;
  });
}

RigSetup parse_rig_setup(const std::string& text) {
  return parse_json(text, "rig setup", [](const json& j) {
    const json& s = j.contains("setup") ? j.at("setup") : j;
    RigSetup r = RigSetup::defaults();
    if (s.contains("t_ee_rgb")) r.t_ee_rgb = pose_from_json(s.at("t_ee_rgb"));
    if (s.contains("t_rgb_stereo")) r.t_rgb_stereo = pose_from_json(s.at("t_rgb_stereo"));
    if (s.contains("t_rb_ots")) r.t_rb_ots = pose_from_json(s.at("t_rb_ots"));
    if (s.contains("t_ee_marker")) r.t_ee_marker = pose_from_json(s.at("t_ee_marker"));
    if (s.contains("t_rgb_us")) r.t_rgb_us = pose_from_json(s.at("t_rgb_us"));
    return r;
  });
}

std::string chain_json(const FrameChainSpec& spec) {
  json j = json::object();
  auto put = [&](const char* k, const std::optional<RigidTransform>& t) {
    if (t) j[k] = pose_to_json(*t);
  };
  put("t_ee_rgb", spec.t_ee_rgb);
  put("t_rgb_stereo", spec.t_rgb_stereo);
  put("t_rb_ots", spec.t_rb_ots);
  put("t_ee_marker", spec.t_ee_marker);
  put("t_rb_ir1_0", spec.t_rb_ir1_0);
  return j.dump(2) + "\n";
}

FrameChainSpec parse_chain(const std::string& text) {
  return parse_json(text, "frame chain", [](const json& j) {
    FrameChainSpec s;
    auto get = [&](const char* k, std::optional<RigidTransform>& t) {
      if (j.contains(k)) t = pose_from_json(j.at(k));
    };
    get("t_ee_rgb", s.t_ee_rgb);
    get("t_rgb_stereo", s.t_rgb_stereo);
    get("t_rb_ots", s.t_rb_ots);
    get("t_ee_marker", s.t_ee_marker);
    get("t_rb_ir1_0", s.t_rb_ir1_0);
    return s;
  });
}

std::string scene_json(const Scene& scene) {
  json lm = json::array();
  for (const auto& l : scene.landmarks) lm.push_back({l.id, l.position.x(), l.position.y(), l.position.z()});
  json j{{"seed", scene.seed},
         {"bounds_min_mm", {scene.bounds_min.x(), scene.bounds_min.y(), scene.bounds_min.z()}},
         {"bounds_max_mm", {scene.bounds_max.x(), scene.bounds_max.y(), scene.bounds_max.z()}},
         {"landmarks", lm}};
  return j.dump(1) + "\n";
}

Scene parse_scene(const std::string& text) {
  return parse_json(text, "scene", [](const json& j) {
    Scene s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.bounds_min = vec3_from_json(j.at("bounds_min_mm"));
    s.bounds_max = vec3_from_json(j.at("bounds_max_mm"));
    for (const auto& l : j.at("landmarks")) {
      s.landmarks.push_back({l.at(0).get<std::uint64_t>(),
                             Vec3(l.at(1).get<double>(), l.at(2).get<double>(), l.at(3).get<double>())});
    }
    return s;
  });
}

std::string volume_spec_json(const VolumeSpec& spec) {
  json j{{"dims", {spec.dims[0], spec.dims[1], spec.dims[2]}},
         {"spacing_mm", {spec.spacing.x(), spec.spacing.y(), spec.spacing.z()}},
         {"origin_mm", {spec.origin.x(), spec.origin.y(), spec.origin.z()}},
         {"orientation", pose_to_json(spec.orientation)}};
  return j.dump(2) + "\n";
}

VolumeSpec parse_volume_spec(const std::string& text) {
  return parse_json(text, "volume spec", [](const json& j) {
    VolumeSpec s;
    const auto& d = j.at("dims");
    s.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
    s.spacing = vec3_from_json(j.at("spacing_mm"));
    s.origin = vec3_from_json(j.at("origin_mm"));
    if (j.contains("orientation")) s.orientation = pose_from_json(j.at("orientation"));
    s.validate();
    return s;
  });
}

}  // namespace insideout::io
