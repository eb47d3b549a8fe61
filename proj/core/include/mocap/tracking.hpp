#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mocap/appearance.hpp"
#include "mocap/association.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

// Minimum-cost one-to-one assignment over min(rows, cols) pairs; entry r of
// the result is the column matched to row r, or -1. Exact (verified against
// permutation brute force in the tests).
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

struct TrackerParams {
  double threshold = 8.0;        // dissimilarity gate
  double w_appearance = 1.0;     // component weights after standardization
  double w_pose2d = 1.0;
  double w_pose3d = 1.0;
  // Standardization constants frozen from clean synthetic calibration runs.
  double sigma_appearance = 0.05;
  double sigma_pose2d = 2e-4;
  double sigma_pose3d = 1e-3;
  double no_overlap_penalty = 4.0;
  int retention_frames = 90;
  double refresh_seconds = 30.0;
};

struct TrackState {
  int id = 0;
  AppearanceHist hist;
  Pose2d p2d;
  Pose3d p3d_m;
  int last_seen_frame = 0;
  int created_frame = 0;
  double last_refresh_time = 0.0;
  double height_m = 0.0;  // managed by the fitting stage
};

struct Detection {
  PersonObservation obs;
  Pose3d p3d_m;  // Stage II root-relative prediction
  AppearanceHist hist;
};

struct Dissimilarity {
  double total = 0.0;
  double appearance = 0.0;  // raw squared histogram distance
  double pose2d = 0.0;      // mean squared px distance / diag^2, common joints
  double pose3d = 0.0;      // mean squared meter distance
  bool pose_available = false;
};

// Weighted standardized sum. Pose terms decay with the track's unseen age so
// re-identification after occlusion rests on appearance.
Dissimilarity dissimilarity(const Detection& det, const TrackState& track, int frames_unseen,
                            double image_diagonal, const TrackerParams& params);

struct TrackEvent {
  int frame = 0;
  std::string kind;  // created | matched | occluded | dropped
  int track_id = 0;
};

struct StepResult {
  std::vector<int> track_of_detection;  // parallel to detections
  std::vector<TrackEvent> events;
};

// Frame-to-frame identity maintenance: optimal assignment on the
// dissimilarity matrix, gated by the threshold; unmatched detections open
// tracks, unmatched tracks are retained for `retention_frames` then dropped.
// Appearance histograms refresh at arrival and every `refresh_seconds`.
class Tracker {
 public:
  explicit Tracker(const TrackerParams& params) : params_(params) {}

  StepResult step(int frame, double time_s, const std::vector<Detection>& detections,
                  double image_diagonal);

  const std::vector<TrackState>& tracks() const { return tracks_; }
  TrackState* find(int id);

 private:
  TrackerParams params_;
  std::vector<TrackState> tracks_;
  int next_id_ = 0;
};

}  // namespace mocap
