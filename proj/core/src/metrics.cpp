#include "mocap/metrics.hpp"

#include <cmath>

namespace mocap {

MetricsReport evaluate_tracks(const std::vector<PoseTrack>& tracks, const MetricParams& params,
                              bool matched_only) {
  MetricsReport r;
  std::vector<double> thresholds;
  for (double t = 0.0; t <= params.auc_max_mm + 1e-9; t += params.auc_step_mm) {
    thresholds.push_back(t);
  }
  std::vector<int64_t> correct_at(thresholds.size(), 0);
  int64_t correct_pck = 0;
  int64_t counted = 0;
  double mpjpe_sum = 0.0;
  int64_t mpjpe_joints = 0;
  double root_sum = 0.0;
  int64_t root_count = 0;

  for (const PoseTrack& track : tracks) {
    const size_t n = track.gt_m.size();
    for (size_t t = 0; t < n; ++t) {
      const bool det = t < track.detected.size() && track.detected[t];
      r.frames_total += 1;
      if (det) r.frames_detected += 1;
      if (!det) {
        if (!matched_only) counted += kNumJoints;  // all joints incorrect
        continue;
      }
      for (int j = 0; j < kNumJoints; ++j) {
        const double err_mm = 1000.0 * (track.pred_m[t][j] - track.gt_m[t][j]).norm();
        ++counted;
        if (err_mm <= params.pck_threshold_mm) ++correct_pck;
        for (size_t k = 0; k < thresholds.size(); ++k) {
          if (err_mm <= thresholds[k]) ++correct_at[k];
        }
        mpjpe_sum += err_mm;
        ++mpjpe_joints;
      }
      if (t < track.pred_root_world.size() && t < track.gt_root_world.size()) {
        root_sum += 1000.0 * (track.pred_root_world[t] - track.gt_root_world[t]).norm();
        ++root_count;
      }
    }

    // Jitter over the detected prefix runs.
    std::vector<Pose3d> run;
    double jit = 0.0;
    int jit_n = 0;
    for (size_t t = 0; t <= n; ++t) {
      const bool det = t < n && t < track.detected.size() && track.detected[t];
      if (det) {
        run.push_back(track.pred_m[t]);
      } else {
        if (run.size() >= 3) {
          jit += position_jitter_mm(run) * static_cast<double>(run.size() - 2);
          jit_n += static_cast<int>(run.size() - 2);
        }
        run.clear();
      }
    }
    if (jit_n > 0) r.jitter_mm += jit / jit_n;
  }

  if (counted > 0) {
    r.pck = 100.0 * static_cast<double>(correct_pck) / static_cast<double>(counted);
    double auc = 0.0;
    for (int64_t c : correct_at) auc += static_cast<double>(c) / static_cast<double>(counted);
    r.auc = 100.0 * auc / static_cast<double>(correct_at.size());
  }
  if (mpjpe_joints > 0) r.mpjpe_mm = mpjpe_sum / static_cast<double>(mpjpe_joints);
  if (root_count > 0) r.abs_root_mm = root_sum / static_cast<double>(root_count);
  if (!tracks.empty()) r.jitter_mm /= static_cast<double>(tracks.size());
  r.joints_evaluated = static_cast<int>(counted);
  return r;
}

double position_jitter_mm(const std::vector<Pose3d>& seq) {
  if (seq.size() < 3) return 0.0;
  double sum = 0.0;
  int64_t n = 0;
  for (size_t t = 2; t < seq.size(); ++t) {
    for (int j = 0; j < kNumJoints; ++j) {
      const Vec3 acc = seq[t][j] - 2.0 * seq[t - 1][j] + seq[t - 2][j];
      sum += acc.norm();
      ++n;
    }
  }
  return 1000.0 * sum / static_cast<double>(n);
}

double dof_jitter(const std::vector<PoseParams>& seq) {
  if (seq.size() < 3) return 0.0;
  double sum = 0.0;
  int64_t n = 0;
  for (size_t t = 2; t < seq.size(); ++t) {
    const PoseParams acc = seq[t] - 2.0 * seq[t - 1] + seq[t - 2];
    sum += acc.cwiseAbs().sum();
    n += kNumDof;
  }
  return sum / static_cast<double>(n);
}

}  // namespace mocap
