#include "insideout/vostereo.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>

#include "insideout/error.hpp"

namespace insideout {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Left-multiplied update of the world-to-camera transform.
RigidTransform apply_update(const RigidTransform& camera_in_world, const Eigen::Matrix<double, 6, 1>& d) {
  const RigidTransform cw = camera_in_world.inverse();
  const RigidTransform step(rotation_from_vector(d.tail<3>()), Vec3(d.head<3>()));
  return (step * cw).inverse();
}

double total_cost(const RigidTransform& pose, std::span<const PnpCorrespondence> cs, const StereoRig& rig,
                  int* used) {
  double cost = 0.0;
  int n = 0;
  Eigen::VectorXd r;
  for (const auto& c : cs) {
    try {
      stereo_residual(pose, c, rig, &r, nullptr);
    } catch (const Error&) {
      continue;
    }
    cost += r.squaredNorm();
    n += static_cast<int>(r.size());
  }
  if (used != nullptr) *used = n;
  return cost;
}

std::vector<std::size_t> unique_id_indices(std::span<const FeatureObservation> frame) {
  std::unordered_map<std::uint64_t, int> counts;
  counts.reserve(frame.size());
  for (const auto& o : frame) ++counts[o.feature_id];
  std::vector<std::size_t> out;
  out.reserve(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (counts[frame[i].feature_id] == 1) out.push_back(i);
  }
  return out;
}

}  // namespace

void stereo_residual(const RigidTransform& camera_in_world, const PnpCorrespondence& c,
                     const StereoRig& rig, Eigen::VectorXd* residual,
                     Eigen::Matrix<double, Eigen::Dynamic, 6>* jacobian) {
  const int rows = c.px_right ? 4 : 2;
  residual->resize(rows);
  const Vec3 xc = camera_in_world.apply_inverse(c.landmark_world);
  ProjectionJacobian jl;
  const Vec2 pl = project(rig.left, xc, jacobian != nullptr ? &jl : nullptr);
  residual->head<2>() = pl - c.px_left;
  Eigen::Matrix<double, 3, 6> dxc;
  if (jacobian != nullptr) {
    jacobian->resize(rows, 6);
    dxc.leftCols<3>() = Mat3::Identity();
    dxc.rightCols<3>() = -skew(xc);
    jacobian->topRows<2>() = jl * dxc;
  }
  if (c.px_right) {
    const Vec3 xr = rig.t_left_right.apply_inverse(xc);
    ProjectionJacobian jr;
    const Vec2 pr = project(rig.right, xr, jacobian != nullptr ? &jr : nullptr);
    residual->tail<2>() = pr - *c.px_right;
    if (jacobian != nullptr) {
      const Mat3 r_rl = rig.t_left_right.rotation_matrix().transpose();
      jacobian->bottomRows<2>() = jr * r_rl * dxc;
    }
  }
}

bool reprojection_errors(const RigidTransform& camera_in_world, const PnpCorrespondence& c,
                         const StereoRig& rig, double* err_left, double* err_right) {
  const Vec3 xc = camera_in_world.apply_inverse(c.landmark_world);
  if (!(xc.z() > 1e-9)) return false;
  *err_left = (project(rig.left, xc) - c.px_left).norm();
  *err_right = 0.0;
  if (c.px_right) {
    const Vec3 xr = rig.t_left_right.apply_inverse(xc);
    if (!(xr.z() > 1e-9)) return false;
    *err_right = (project(rig.right, xr) - *c.px_right).norm();
  }
  return true;
}

RefineResult refine_pose(const RigidTransform& pose0, std::span<const PnpCorrespondence> inliers,
                         const StereoRig& rig, int max_iterations, double tolerance) {
  if (inliers.size() < 4) fail(ErrorCode::kInvalidArgument, "pose refinement needs at least 4 points");
  RefineResult out;
  int n_res = 0;
  const double cost0 = total_cost(pose0, inliers, rig, &n_res);
  out.initial_rms = n_res > 0 ? std::sqrt(cost0 / n_res) : 0.0;

  RigidTransform pose = pose0;
  RigidTransform best = pose0;
  double best_cost = cost0;
  double prev_cost = cost0;
  int increases = 0;
  Eigen::VectorXd r;
  Eigen::Matrix<double, Eigen::Dynamic, 6> j;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : inliers) {
      try {
        stereo_residual(pose, c, rig, &r, &j);
      } catch (const Error&) {
        continue;
      }
      h.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-g);
    out.iterations = it + 1;
    if (!delta.allFinite()) break;
    pose = apply_update(pose, delta);
    const double cost = total_cost(pose, inliers, rig, nullptr);
    if (cost < best_cost) {
      best_cost = cost;
      best = pose;
    }
    if (delta.norm() < tolerance) {
      out.converged = true;
      break;
    }
    increases = cost > prev_cost ? increases + 1 : 0;
    prev_cost = cost;
    if (increases >= 3) {
      out.pose = pose0;
      out.final_rms = out.initial_rms;
      out.converged = false;
      return out;
    }
  }
  out.pose = best;
  const double final_cost = total_cost(best, inliers, rig, &n_res);
  out.final_rms = n_res > 0 ? std::sqrt(final_cost / n_res) : 0.0;
  return out;
}

namespace {

struct Score {
  int inliers = 0;
  double error = 0.0;
  bool better_than(const Score& o) const {
    return inliers > o.inliers || (inliers == o.inliers && error < o.error);
  }
};

Score score_pose(const RigidTransform& pose, std::span<const PnpCorrespondence> cs, const StereoRig& rig,
                 double threshold, std::vector<bool>* mask) {
  Score s;
  if (mask != nullptr) mask->assign(cs.size(), false);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    double el = 0.0, er = 0.0;
    if (!reprojection_errors(pose, cs[i], rig, &el, &er)) continue;
    if (el <= threshold && er <= threshold) {
      ++s.inliers;
      s.error += el * el + er * er;
      if (mask != nullptr) (*mask)[i] = true;
    }
  }
  return s;
}

std::vector<PnpCorrespondence> select(std::span<const PnpCorrespondence> cs, const std::vector<bool>& mask) {
  std::vector<PnpCorrespondence> out;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (mask[i]) out.push_back(cs[i]);
  }
  return out;
}

}  // namespace

RansacResult ransac_pnp(std::span<const PnpCorrespondence> correspondences, const StereoRig& rig,
                        const RigidTransform& prior, const VoOptions& options, std::uint64_t seed) {
  const auto n = correspondences.size();
  if (n < 4) {
    fail(ErrorCode::kInvalidArgument,
         "RANSAC PnP needs at least 4 correspondences, got " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  RansacResult out;
  Score best;
  RigidTransform best_pose = prior;
  double needed = static_cast<double>(options.ransac_max_iterations);
  std::array<PnpCorrespondence, 4> sample;
  int it = 0;
  for (; it < options.ransac_max_iterations && it < needed; ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      std::size_t c;
      do {
        c = pick(rng);
      } while (std::find(idx.begin(), idx.begin() + k, c) != idx.begin() + k);
      idx[k] = c;
      sample[k] = correspondences[c];
    }
    const RefineResult hyp = refine_pose(prior, sample, rig, 10, 1e-10);
    const Score s = score_pose(hyp.pose, correspondences, rig, options.ransac_threshold_px, nullptr);
    if (s.better_than(best)) {
      best = s;
      best_pose = hyp.pose;
      const double w = static_cast<double>(s.inliers) / static_cast<double>(n);
      const double denom = std::log(std::max(1e-300, 1.0 - std::pow(w, 4.0)));
      needed = w >= 1.0 ? 0.0 : std::log(1.0 - options.ransac_confidence) / denom;
    }
  }
  out.iterations = it;
  if (best.inliers < options.min_inliers) {
    fail(ErrorCode::kNoConsensus, "RANSAC found " + std::to_string(best.inliers) +
                                      " inliers, below the minimum of " +
                                      std::to_string(options.min_inliers));
  }

  // Refine on the consensus set, re-score, and refine once more.
  std::vector<bool> mask;
  score_pose(best_pose, correspondences, rig, options.ransac_threshold_px, &mask);
  RigidTransform pose = best_pose;
  for (int round = 0; round < 2; ++round) {
    const auto in = select(correspondences, mask);
    if (in.size() < 4) break;
    const RefineResult ref =
        refine_pose(pose, in, rig, options.refine_max_iterations, options.refine_tolerance);
    std::vector<bool> new_mask;
    const Score s = score_pose(ref.pose, correspondences, rig, options.ransac_threshold_px, &new_mask);
    if (s.inliers < options.min_inliers) break;
    pose = ref.pose;
    mask = std::move(new_mask);
  }
  out.pose = pose;
  out.inliers = std::move(mask);
  return out;
}

TrackSession TrackSession::init_map(const StereoRig& rig, std::span<const FeatureObservation> frame,
                                    double t, const VoOptions& options) {
  rig.validate();
  TrackSession s(rig, options);
  Keyframe kf;
  kf.t = t;
  kf.pose = RigidTransform::identity();
  const int added = s.triangulate_new(frame, kf);
  if (added < options.min_init_landmarks) {
    fail(ErrorCode::kInitFailure, "map initialization triangulated " + std::to_string(added) +
                                      " landmarks, need " + std::to_string(options.min_init_landmarks));
  }
  s.keyframes_.push_back(std::move(kf));
  s.trajectory_.push_back(t, s.current_pose_);
  s.frame_index_ = 1;
  return s;
}

int TrackSession::triangulate_new(std::span<const FeatureObservation> frame, Keyframe& kf) {
  int added = 0;
  for (std::size_t i : unique_id_indices(frame)) {
    const auto& o = frame[i];
    if (!o.px_right || map_.count(o.feature_id) != 0) continue;
    Vec3 xc;
    try {
      xc = triangulate(rig_, o.px_left, *o.px_right);
    } catch (const Error&) {
      continue;  // parallel rays or behind a camera
    }
    if (xc.z() < options_.min_depth_mm || xc.z() > options_.max_depth_mm) continue;
    const PnpCorrespondence c{xc, o.px_left, o.px_right};
    double el = 0.0, er = 0.0;
    if (!reprojection_errors(RigidTransform::identity(), c, rig_, &el, &er)) continue;
    if (el > options_.stereo_match_threshold_px || er > options_.stereo_match_threshold_px) continue;
    Landmark lm;
    lm.id = o.feature_id;
    lm.position_world = kf.pose.apply(xc);
    lm.last_seen_check = check_index_;
    absorb_sighting(lm, kf.pose, o.px_left, o.px_right);
    map_.emplace(lm.id, std::move(lm));
    kf.observations.push_back({o.feature_id, o.px_left, o.px_right});
    ++added;
  }
  landmarks_created_ += static_cast<std::size_t>(added);
  return added;
}

TrackResult TrackSession::track_frame(std::span<const FeatureObservation> frame, double t) {
  TrackResult res;
  res.t = t;
  const long frame_no = frame_index_++;

  std::vector<PnpCorrespondence> cs;
  std::vector<std::size_t> obs_index;
  for (std::size_t i : unique_id_indices(frame)) {
    auto it = map_.find(frame[i].feature_id);
    if (it == map_.end()) continue;
    cs.push_back({it->second.position_world, frame[i].px_left, frame[i].px_right});
    obs_index.push_back(i);
  }
  res.associations = static_cast<int>(cs.size());

  auto mark_lost = [&]() {
    status_ = TrackStatus::kLost;
    ++frames_lost_;
    res.lost = true;
    res.pose = current_pose_;
    return res;
  };
  if (cs.size() < 4) return mark_lost();

  RansacResult rr;
  try {
    const std::uint64_t seed = options_.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(frame_no);
    rr = ransac_pnp(cs, rig_, current_pose_, options_, seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoConsensus) throw;
    return mark_lost();
  }
  if (!trajectory_.empty() && !(t > trajectory_.end_time())) {
    fail(ErrorCode::kInvalidArgument, "frame timestamps must be strictly increasing");
  }

  status_ = TrackStatus::kTracking;
  current_pose_ = rr.pose;
  trajectory_.push_back(t, current_pose_);
  res.pose = current_pose_;

  // Update landmark bookkeeping; drop landmarks that keep failing.
  ++check_index_;
  for (std::size_t k = 0; k < cs.size(); ++k) {
    auto it = map_.find(frame[obs_index[k]].feature_id);
    if (rr.inliers[k]) {
      ++it->second.observation_count;
      absorb_sighting(it->second, current_pose_, cs[k].px_left, cs[k].px_right);
      it->second.last_seen_check = check_index_;
      it->second.consecutive_outliers = 0;
      res.inlier_observations.push_back(obs_index[k]);
    } else if (++it->second.consecutive_outliers >= options_.max_consecutive_outliers) {
      forget_landmark(it);
    }
  }
  res.inliers = static_cast<int>(res.inlier_observations.size());
  inlier_ratio_sum_ += static_cast<double>(res.inliers) / static_cast<double>(cs.size());
  ++inlier_ratio_count_;

  const KeyframeDecision kd = keyframe_policy(frame, res.inlier_observations, t);
  res.keyframe_inserted = kd.inserted;
  res.landmarks_added = kd.landmarks_added;
  return res;
}

KeyframeDecision TrackSession::keyframe_policy(std::span<const FeatureObservation> frame,
                                               std::span<const std::size_t> inlier_observations, double t) {
  KeyframeDecision d;
  const Keyframe& last = keyframes_.back();
  const double fraction = last.observations.empty()
                              ? 0.0
                              : static_cast<double>(inlier_observations.size()) /
                                    static_cast<double>(last.observations.size());
  const PoseDelta motion = pose_delta(current_pose_, last.pose);
  const bool insert = fraction < options_.keyframe_tracked_fraction ||
                      motion.translation_mm > options_.keyframe_translation_mm ||
                      motion.rotation_rad > deg_to_rad(options_.keyframe_rotation_deg);
  if (insert) {
    Keyframe kf;
    kf.t = t;
    kf.pose = current_pose_;
    for (std::size_t i : inlier_observations)
      kf.observations.push_back({frame[i].feature_id, frame[i].px_left, frame[i].px_right});
    d.landmarks_added = triangulate_new(frame, kf);
    keyframes_.push_back(std::move(kf));
    d.inserted = true;
  }
  // Cull landmarks that went unobserved and never gathered support.
  for (auto it = map_.begin(); it != map_.end();) {
    if (check_index_ - it->second.last_seen_check > options_.cull_window_checks &&
        it->second.observation_count < options_.cull_min_observations) {
      it = forget_landmark(it);
      ++d.landmarks_culled;
    } else {
      ++it;
    }
  }
  return d;
}

void TrackSession::absorb_sighting(Landmark& lm, const RigidTransform& camera_in_world, const Vec2& px_left,
                                   const std::optional<Vec2>& px_right) const {
  const Vec3 x = lm.position_world;
  const Mat3 r_cw = camera_in_world.rotation_matrix().transpose();
  const Vec3 xc = camera_in_world.apply_inverse(x);
  if (!(xc.z() > 1e-9)) return;
  auto add = [&](const Eigen::Matrix<double, 2, 3>& j, const Vec2& r) {
    lm.information += j.transpose() * j;
    lm.information_vector += j.transpose() * (j * x - r);
  };
  ProjectionJacobian jl;
  const Vec2 rl = project(rig_.left, xc, &jl) - px_left;
  add(jl * r_cw, rl);
  if (px_right) {
    const Vec3 xr = rig_.t_left_right.apply_inverse(xc);
    if (xr.z() > 1e-9) {
      ProjectionJacobian jr;
      const Vec2 rr = project(rig_.right, xr, &jr) - *px_right;
      add(jr * rig_.t_left_right.rotation_matrix().transpose() * r_cw, rr);
    }
  }
  // A single monocular sighting leaves depth unconstrained.
  Eigen::SelfAdjointEigenSolver<Mat3> eig(lm.information);
  if (eig.eigenvalues()(0) <= 1e-12 * eig.eigenvalues()(2)) return;
  const Vec3 solved = lm.information.ldlt().solve(lm.information_vector);
  if (solved.allFinite()) lm.position_world = solved;
}

std::map<std::uint64_t, Landmark>::iterator TrackSession::forget_landmark(
    std::map<std::uint64_t, Landmark>::iterator it) {
  const std::uint64_t id = it->first;
  for (auto& kf : keyframes_) {
    std::erase_if(kf.observations, [id](const auto& o) { return o.id == id; });
  }
  return map_.erase(it);
}

SessionStats TrackSession::stats() const {
  SessionStats s;
  s.frames = static_cast<int>(frame_index_);
  s.frames_lost = frames_lost_;
  s.map_size = map_.size();
  s.keyframes = keyframes_.size();
  s.landmarks_created = landmarks_created_;
  s.mean_inlier_ratio = inlier_ratio_count_ > 0 ? inlier_ratio_sum_ / inlier_ratio_count_ : 0.0;
  return s;
}

std::map<std::uint64_t, double> TrackSession::landmark_reprojection_rms() const {
  std::map<std::uint64_t, std::pair<double, int>> acc;
  for (const auto& kf : keyframes_) {
    for (const auto& [id, px, px_right] : kf.observations) {
      auto it = map_.find(id);
      if (it == map_.end()) continue;
      const Vec3 xc = kf.pose.apply_inverse(it->second.position_world);
      if (!(xc.z() > 1e-9)) continue;
      auto& a = acc[id];
      a.first += (project(rig_.left, xc) - px).squaredNorm();
      ++a.second;
    }
  }
  std::map<std::uint64_t, double> out;
  for (const auto& [id, a] : acc) out[id] = std::sqrt(a.first / (2.0 * a.second));
  return out;
}

}  // namespace insideout
