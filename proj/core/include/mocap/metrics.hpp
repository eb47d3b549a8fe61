#pragma once

#include <vector>

#include "mocap/skeleton.hpp"

namespace mocap {

struct MetricParams {
  double pck_threshold_mm = 150.0;
  double auc_step_mm = 5.0;  // AUC = mean PCK over 0..150 mm in these steps
  double auc_max_mm = 150.0;
};

// Aligned per-person trajectories; `detected[t]` marks frames where the
// person was predicted at all.
struct PoseTrack {
  int person_id = 0;
  std::vector<Pose3d> pred_m;  // root-relative meters, valid where detected
  std::vector<Pose3d> gt_m;
  std::vector<bool> detected;
  std::vector<Vec3> pred_root_world;  // optional, empty to skip
  std::vector<Vec3> gt_root_world;
};

struct MetricsReport {
  double pck = 0.0;            // percent
  double auc = 0.0;            // percent
  double mpjpe_mm = 0.0;       // over detected frames
  double abs_root_mm = 0.0;    // mean absolute root position error
  double jitter_mm = 0.0;      // mean joint acceleration magnitude
  int joints_evaluated = 0;
  int frames_detected = 0;
  int frames_total = 0;
};

// `matched_only` = Matched mode (only detected frames count); otherwise All
// mode, where undetected frames contribute incorrect joints to PCK/AUC.
// MPJPE and jitter are always computed over detected frames.
MetricsReport evaluate_tracks(const std::vector<PoseTrack>& tracks, const MetricParams& params,
                              bool matched_only);

// Mean ||p[t] - 2 p[t-1] + p[t-2]|| over joints and frames, millimeters.
double position_jitter_mm(const std::vector<Pose3d>& seq);

// Mean |theta[t] - 2 theta[t-1] + theta[t-2]| over DOF and frames, radians.
double dof_jitter(const std::vector<PoseParams>& seq);

}  // namespace mocap
