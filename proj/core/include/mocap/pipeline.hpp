#pragma once

#include <map>
#include <optional>
#include <vector>

#include "mocap/config.hpp"
#include "mocap/decoder.hpp"
#include "mocap/fitting.hpp"
#include "mocap/one_euro.hpp"
#include "mocap/simulator.hpp"
#include "mocap/tracking.hpp"

namespace mocap {

struct PersonOutput {
  int track_id = -1;
  int gt_person = -1;  // nearest ground-truth subject, for evaluation only
  Pose2d p2d;
  std::array<double, kNumJoints> conf{};
  Pose3d stage2_m;          // raw Stage II prediction, root-relative meters
  Pose3d fit_m;             // Stage III output, root-relative meters
  PoseParams theta;         // 29 DOF
  Vec3 root_world_m = Vec3::Zero();
  double height_m = 0.0;
  bool fitted = false;      // Stage III produced a pose this frame
  bool reinitialized = false;
  double grad_norm_3d_lim = 0.0;
};

struct FrameOutput {
  int frame = 0;
  double time = 0.0;
  std::vector<PersonOutput> persons;
  std::vector<TrackEvent> events;
  // Wall-clock per stage, milliseconds.
  double ms_render = 0.0;
  double ms_assoc = 0.0;
  double ms_stage2 = 0.0;
  double ms_tracking = 0.0;
  double ms_fitting = 0.0;
};

// Strings the full loop together: Stage I simulation -> part association ->
// Stage II decode -> identity tracking -> Stage III kinematic fitting.
// Holds per-track fitting state (filters, bone lengths, pose history).
class Pipeline {
 public:
  enum class Stage2Mode { kModel, kOracle };

  struct Options {
    RenderParams render;
    NoiseSpec noise;
    AssocParams assoc;
    FittingRunConfig fitting;
    TrackerParams tracker;
    Stage2Mode stage2 = Stage2Mode::kModel;
    bool enable_stage3 = true;
  };

  Pipeline(const Skeleton& skel, const Options& options, const MlpModel* model);

  FrameOutput process(const SceneFrame& frame);

  const Tracker& tracker() const { return tracker_; }

 private:
  struct TrackFit {
    bool initialized = false;
    BoneLengths bones{};
    double scale_m = 1.7;   // Stage II implied height (E_3D normalization)
    double height_m = 1.7;  // calibrated absolute height (reprojection scale)
    bool height_calibrated = false;
    bool bones_frozen = false;
    std::vector<Pose3d> early_frames;  // Stage II poses, bone estimation window
    std::optional<PoseParams> prev1;
    std::optional<PoseParams> prev2;
    std::vector<OneEuroFilter> filt2d;  // 2 channels per joint
    std::vector<OneEuroFilter> filt3d;  // 3 channels per joint
    RecoveryMonitor monitor;

    TrackFit() : monitor(RecoveryMonitor::kDefaultTau) {}
  };

  PersonOutput fit_person(const SceneFrame& frame, const PersonObservation& obs,
                          const Pose3d& stage2_m, int track_id, double time_s);

  const Skeleton& skel_;
  Options opt_;
  const MlpModel* model_;
  JointLimits limits_;
  Tracker tracker_;
  std::map<int, TrackFit> fits_;

  StageOneMaps maps_;
  RenderInfo info_;
  HsImage hs_;
};

}  // namespace mocap
