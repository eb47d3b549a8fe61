#include "mocap/pipeline.hpp"

#include <chrono>
#include <cmath>

namespace mocap {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Bone lengths from however many frames are available (the public
// estimate_bone_lengths keeps its >= 10 frame precondition; initialization
// has to start from a single pose).
BoneLengths bones_from_poses(const Skeleton& skel, const std::vector<Pose3d>& poses,
                             double* scale_m) {
  BoneLengths mean{};
  for (const Pose3d& pose : poses) {
    for (int j = 1; j < kNumJoints; ++j) {
      mean[static_cast<size_t>(j)] += (pose[j] - pose[skel.parent(j)]).norm();
    }
  }
  for (int j = 1; j < kNumJoints; ++j) mean[static_cast<size_t>(j)] /= static_cast<double>(poses.size());
  const double height = std::max(1e-6, skel.rest_height(mean));
  for (int j = 1; j < kNumJoints; ++j) mean[static_cast<size_t>(j)] /= height;
  if (scale_m) *scale_m = height;
  return mean;
}

PixelBox torso_box(const Pose2d& p2d, int width, int height) {
  double lo_x = 1e18, hi_x = -1e18, lo_y = 1e18, hi_y = -1e18;
  int found = 0;
  for (int j : {kNeck, kLShoulder, kRShoulder, kLHip, kRHip}) {
    if (!p2d.visible[static_cast<size_t>(j)]) continue;
    ++found;
    lo_x = std::min(lo_x, p2d.px[static_cast<size_t>(j)].x());
    hi_x = std::max(hi_x, p2d.px[static_cast<size_t>(j)].x());
    lo_y = std::min(lo_y, p2d.px[static_cast<size_t>(j)].y());
    hi_y = std::max(hi_y, p2d.px[static_cast<size_t>(j)].y());
  }
  if (found < 2) {
    // Fall back to a patch around the neck.
    const Vec2 n = p2d.px[kNeck];
    return PixelBox{static_cast<int>(n.x()) - 8, static_cast<int>(n.y()) - 8,
                    static_cast<int>(n.x()) + 8, static_cast<int>(n.y()) + 8}
        .clipped(width, height);
  }
  const int margin = 4;
  return PixelBox{static_cast<int>(lo_x) - margin, static_cast<int>(lo_y) - margin,
                  static_cast<int>(hi_x) + margin + 1, static_cast<int>(hi_y) + margin + 1}
      .clipped(width, height);
}

}  // namespace

Pipeline::Pipeline(const Skeleton& skel, const Options& options, const MlpModel* model)
    : skel_(skel), opt_(options), model_(model), limits_(JointLimits::standard()),
      tracker_(options.tracker) {
  if (opt_.stage2 == Stage2Mode::kModel && model_ == nullptr) {
    throw std::invalid_argument("pipeline: model required in Stage2Mode::kModel");
  }
}

FrameOutput Pipeline::process(const SceneFrame& frame) {
  FrameOutput out;
  out.frame = frame.index;
  out.time = frame.time;
  const double diag = frame.cam.image_diagonal();

  auto t0 = std::chrono::steady_clock::now();
  render_stage1(skel_, frame, opt_.render, opt_.noise, &maps_, &info_);
  render_appearance(skel_, frame, &hs_);
  out.ms_render = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const auto observations = associate(skel_, maps_, opt_.assoc);
  out.ms_assoc = ms_since(t0);

  // Nearest ground-truth subject per observation (evaluation bookkeeping).
  std::vector<int> gt_of_obs(observations.size(), -1);
  for (size_t i = 0; i < observations.size(); ++i) {
    double best = 24.0;
    for (size_t k = 0; k < frame.persons.size(); ++k) {
      if (!info_.visible[k][kNeck]) continue;
      const double d = (info_.gt2d[k].px[kNeck] - observations[i].pose2d.px[kNeck]).norm();
      if (d < best) {
        best = d;
        gt_of_obs[i] = static_cast<int>(k);
      }
    }
  }

  t0 = std::chrono::steady_clock::now();
  std::vector<Pose3d> stage2(observations.size());
  for (size_t i = 0; i < observations.size(); ++i) {
    if (opt_.stage2 == Stage2Mode::kOracle) {
      stage2[i] = gt_of_obs[i] >= 0 ? info_.gt3d_m[static_cast<size_t>(gt_of_obs[i])] : Pose3d{};
    } else {
      stage2[i] = decode_pose(*model_, observations[i], diag);
    }
  }
  out.ms_stage2 = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  std::vector<Detection> detections(observations.size());
  for (size_t i = 0; i < observations.size(); ++i) {
    detections[i].obs = observations[i];
    detections[i].p3d_m = stage2[i];
    detections[i].hist = compute_appearance(hs_, torso_box(observations[i].pose2d, frame.width, frame.height));
  }
  const StepResult step = tracker_.step(frame.index, frame.time, detections, diag);
  out.events = step.events;
  out.ms_tracking = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < observations.size(); ++i) {
    PersonOutput po = opt_.enable_stage3
                          ? fit_person(frame, observations[i], stage2[i],
                                       step.track_of_detection[i], frame.time)
                          : PersonOutput{};
    po.track_id = step.track_of_detection[i];
    po.gt_person = gt_of_obs[i];
    po.p2d = observations[i].pose2d;
    po.conf = observations[i].conf;
    po.stage2_m = stage2[i];
    out.persons.push_back(std::move(po));
  }
  out.ms_fitting = ms_since(t0);

  // Drop fitting state for tracks the tracker has dropped.
  for (const TrackEvent& e : step.events) {
    if (e.kind == "dropped") fits_.erase(e.track_id);
  }
  return out;
}

PersonOutput Pipeline::fit_person(const SceneFrame& frame, const PersonObservation& obs,
                                  const Pose3d& stage2_m, int track_id, double time_s) {
  PersonOutput po;
  auto [it, inserted] = fits_.try_emplace(track_id);
  TrackFit& fit = it->second;
  if (inserted) fit.monitor = RecoveryMonitor(opt_.fitting.recovery_tau);

  if (fit.early_frames.size() < 16) fit.early_frames.push_back(stage2_m);

  if (!fit.bones_frozen) {
    fit.bones = bones_from_poses(skel_, fit.early_frames, &fit.scale_m);
    if (fit.early_frames.size() >= 10) {
      // Bone lengths lock in as the mean over the first 10 frames.
      std::vector<Pose3d> first10(fit.early_frames.begin(), fit.early_frames.begin() + 10);
      fit.bones = bones_from_poses(skel_, first10, &fit.scale_m);
      fit.bones_frozen = true;
    }
  }
  if (!fit.height_calibrated) {
    // Ground-plane height calibration, once, at arrival.
    int foot = -1;
    double best_v = -1e18;
    for (int j : {kLFootTip, kRFootTip, kLAnkle, kRAnkle}) {
      if (!obs.pose2d.visible[static_cast<size_t>(j)]) continue;
      if (obs.pose2d.px[static_cast<size_t>(j)].y() > best_v) {
        best_v = obs.pose2d.px[static_cast<size_t>(j)].y();
        foot = j;
      }
    }
    if (foot >= 0 && obs.pose2d.visible[kHead]) {
      const auto h = calibrate_height(obs.pose2d.px[static_cast<size_t>(foot)],
                                      obs.pose2d.px[kHead], frame.cam);
      if (h && *h > 0.5 && *h < 3.0) {
        fit.height_m = *h;
        fit.height_calibrated = true;
      }
    }
    if (!fit.height_calibrated) fit.height_m = fit.scale_m;  // provisional
  }

  // Temporal filtering of the Stage II evidence before fitting.
  Pose2d p2d = obs.pose2d;
  Pose3d p3d = stage2_m;
  if (opt_.fitting.enable_filter) {
    if (fit.filt2d.empty()) {
      fit.filt2d.assign(2 * kNumJoints, OneEuroFilter(opt_.fitting.one_euro));
      fit.filt3d.assign(3 * kNumJoints, OneEuroFilter(opt_.fitting.one_euro));
    }
    for (int j = 0; j < kNumJoints; ++j) {
      if (p2d.visible[static_cast<size_t>(j)]) {
        p2d.px[static_cast<size_t>(j)].x() =
            fit.filt2d[static_cast<size_t>(2 * j)].filter(p2d.px[static_cast<size_t>(j)].x(), time_s);
        p2d.px[static_cast<size_t>(j)].y() =
            fit.filt2d[static_cast<size_t>(2 * j + 1)].filter(p2d.px[static_cast<size_t>(j)].y(), time_s);
      }
      for (int c = 0; c < 3; ++c) {
        p3d[j][c] = fit.filt3d[static_cast<size_t>(3 * j + c)].filter(p3d[j][c], time_s);
      }
    }
  }

  // Targets in the unit-height skeleton scale.
  Pose3d target_unit;
  for (int j = 0; j < kNumJoints; ++j) target_unit[j] = p3d[j] / fit.scale_m;

  EnergyInput in;
  in.target_p3d = &target_unit;
  in.target_p2d = &p2d;
  in.conf = &obs.conf;
  in.height_m = fit.height_m;
  in.cam = &frame.cam;
  in.bones = &fit.bones;
  if (opt_.fitting.enable_temporal) {
    in.prev1 = fit.prev1 ? &*fit.prev1 : nullptr;
    in.prev2 = fit.prev2 ? &*fit.prev2 : nullptr;
  }

  if (!fit.initialized) {
    const InitResult init = init_track(skel_, in, opt_.fitting.weights, limits_, opt_.fitting.fit);
    if (!init.ok) return po;  // init deferred to a later frame
    fit.initialized = true;
    fit.prev1 = init.theta;
    po.theta = init.theta;
  } else {
    const FitResult res = fit_frame(skel_, *fit.prev1, in, opt_.fitting.weights, limits_,
                                    opt_.fitting.fit);
    po.theta = res.theta;
    po.grad_norm_3d_lim = res.grad_norm_3d_lim;
    if (fit.monitor.observe(res.grad_norm_3d_lim)) {
      // Persistent inconsistency: restart this track's pose state.
      fit = TrackFit{};
      fit.monitor = RecoveryMonitor(opt_.fitting.recovery_tau);
      PersonOutput redo = fit_person(frame, obs, stage2_m, track_id, time_s);
      redo.reinitialized = true;
      return redo;
    }
    fit.prev2 = fit.prev1;
    fit.prev1 = res.theta;
  }

  const Pose3d rel = skel_.forward_kinematics(po.theta, fit.bones);
  for (int j = 0; j < kNumJoints; ++j) po.fit_m[j] = fit.height_m * rel[j];
  po.root_world_m = fit.height_m * po.theta.head<3>();
  po.height_m = fit.height_m;
  po.fitted = true;
  return po;
}

}  // namespace mocap
