#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <span>
#include <vector>

#include "mocap/camera.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

struct EnergyWeights {
  double w3d = 0.9;
  double w2d = 1e-5;
  double wlim = 0.5;
  double wtemp = 1e-7;
  double wdepth = 8e-6;
  // Relative 2D weights: lower limbs 1.7, elbows 1.5, wrists 2.0, torso 1.0.
  std::array<double, kNumJoints> w2d_joint;

  EnergyWeights();
};

// Inputs to the per-person fitting energy. The 3D target lives in the
// unit-height skeleton scale; `height_m` maps the skeleton to meters for the
// reprojection term. Previous poses may be null (temporal terms become 0).
struct EnergyInput {
  const Pose3d* target_p3d = nullptr;  // root-relative, unit-height scale
  const Pose2d* target_p2d = nullptr;  // absolute pixels + visibility (nullable)
  const std::array<double, kNumJoints>* conf = nullptr;
  const PoseParams* prev1 = nullptr;
  const PoseParams* prev2 = nullptr;
  double height_m = 1.7;
  const CameraModel* cam = nullptr;
  const BoneLengths* bones = nullptr;
};

struct EnergyBreakdown {
  double e3d = 0.0;
  double e2d = 0.0;
  double elim = 0.0;
  double etemp = 0.0;
  double edepth = 0.0;
  double total = 0.0;  // weighted sum
};

EnergyBreakdown energy(const Skeleton& skel, const PoseParams& theta, const EnergyInput& in,
                       const EnergyWeights& w, const JointLimits& limits);

// Closed-form d(total)/d(theta) via the FK and projection jacobians. Also
// returns the unweighted gradient norm of E_3D + E_lim used by the tracking
// failure monitor, and optionally a diagonal Gauss-Newton scale.
PoseParams energy_gradient(const Skeleton& skel, const PoseParams& theta, const EnergyInput& in,
                           const EnergyWeights& w, const JointLimits& limits,
                           double* grad_norm_3d_lim = nullptr, PoseParams* gn_diag = nullptr);

struct FitParams {
  int max_iterations = 50;
  double grad_tolerance = 1e-6;
  double armijo_c = 1e-4;
  double backtrack_shrink = 0.5;
  int max_backtracks = 30;
};

struct FitResult {
  PoseParams theta;
  int iterations = 0;
  double energy = 0.0;
  double grad_norm = 0.0;
  double grad_norm_3d_lim = 0.0;  // post-optimization, for the recovery monitor
  bool diverged = false;
};

// Diagonally preconditioned gradient descent with Armijo backtracking from a
// warm start. Optional dof mask restricts which parameters move.
FitResult fit_frame(const Skeleton& skel, const PoseParams& warm_start, const EnergyInput& in,
                    const EnergyWeights& w, const JointLimits& limits, const FitParams& params,
                    const std::array<bool, kNumDof>* dof_mask = nullptr);

// Two-phase initialization: local angles (plus root rotation) against E_3D +
// E_lim only, then global translation/rotation against E_2D with locals held
// fixed. Requires a visible neck and >= 8 visible joints.
struct InitResult {
  PoseParams theta;
  bool ok = false;
  bool low_evidence = false;  // succeeded at the minimum joint count
};
InitResult init_track(const Skeleton& skel, const EnergyInput& in, const EnergyWeights& w,
                      const JointLimits& limits, const FitParams& params);

enum class CalibError { kOk, kFootRayMissesGround, kDegenerateBillboard, kHeadRayParallel };

// Ground-plane height calibration: foot ray -> ground point, vertical
// billboard there (normal = horizontal component of the viewing direction),
// head ray intersected with the billboard; height = distance of that point
// from the ground plane.
std::optional<double> calibrate_height(const Vec2& foot_px, const Vec2& head_px,
                                       const CameraModel& cam, CalibError* err = nullptr);

// Mean linked-joint distances over >= 10 frames of root-relative predictions
// (meters), normalized to unit rest height. Returns the normalization scale
// (the subject's implied metric height) through `scale_m`.
BoneLengths estimate_bone_lengths(const Skeleton& skel, std::span<const Pose3d> frames_m,
                                  double* scale_m);

// Reinitialization trigger: unweighted ||d(E_3D+E_lim)/dtheta|| above tau for
// 30 consecutive frames. Threshold frozen at 5x the 95th percentile of
// post-fit gradient norms observed on clean synthetic runs.
class RecoveryMonitor {
 public:
  static constexpr double kDefaultTau = 1.5;
  static constexpr int kWindow = 30;

  explicit RecoveryMonitor(double tau = kDefaultTau) : tau_(tau) {}

  // Returns true exactly when the streak reaches 30; resets afterwards.
  bool observe(double grad_norm_3d_lim) {
    if (grad_norm_3d_lim > tau_) {
      if (++consecutive_ >= kWindow) {
        consecutive_ = 0;
        return true;
      }
    } else {
      consecutive_ = 0;
    }
    return false;
  }

  int consecutive() const { return consecutive_; }

 private:
  double tau_;
  int consecutive_ = 0;
};

}  // namespace mocap
