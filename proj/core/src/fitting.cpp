#include "mocap/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mocap {

EnergyWeights::EnergyWeights() {
  w2d_joint.fill(1.0);
  for (int j : {kLKnee, kRKnee, kLAnkle, kRAnkle, kLFootTip, kRFootTip}) {
    w2d_joint[static_cast<size_t>(j)] = 1.7;
  }
  w2d_joint[kLElbow] = w2d_joint[kRElbow] = 1.5;
  w2d_joint[kLWrist] = w2d_joint[kRWrist] = 2.0;
}

namespace {

double limit_residual(double v, double lo, double hi) {
  if (v < lo) return v - lo;
  if (v > hi) return v - hi;
  return 0.0;
}

}  // namespace

EnergyBreakdown energy(const Skeleton& skel, const PoseParams& theta, const EnergyInput& in,
                       const EnergyWeights& w, const JointLimits& limits) {
  EnergyBreakdown e;
  const Skeleton::FkState fk = skel.fk_state(theta, *in.bones);

  if (in.target_p3d) {
    for (int j = 0; j < kNumJoints; ++j) {
      const Vec3 rel = fk.pos[static_cast<size_t>(j)] - fk.pos[0];
      e.e3d += (rel - (*in.target_p3d)[j]).squaredNorm();
    }
  }

  if (in.target_p2d && in.cam) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (!in.target_p2d->visible[static_cast<size_t>(j)]) continue;
      const auto pr = in.cam->project(in.height_m * fk.pos[static_cast<size_t>(j)]);
      if (!pr) continue;
      const double cj = in.conf ? (*in.conf)[static_cast<size_t>(j)] : 1.0;
      e.e2d += w.w2d_joint[static_cast<size_t>(j)] * cj *
               (pr->uv - in.target_p2d->px[static_cast<size_t>(j)]).squaredNorm();
    }
  }

  for (int d = 6; d < kNumDof; ++d) {
    const double r = limit_residual(theta[d], limits.lo[d], limits.hi[d]);
    e.elim += r * r;
  }

  if (in.prev1 && in.prev2) {
    e.etemp = (theta - 2.0 * (*in.prev1) + (*in.prev2)).squaredNorm();
  }
  if (in.prev1) {
    e.edepth = std::abs(theta[2] - (*in.prev1)[2]);
  }

  e.total = w.w3d * e.e3d + w.w2d * e.e2d + w.wlim * e.elim + w.wtemp * e.etemp + w.wdepth * e.edepth;
  return e;
}

PoseParams energy_gradient(const Skeleton& skel, const PoseParams& theta, const EnergyInput& in,
                           const EnergyWeights& w, const JointLimits& limits,
                           double* grad_norm_3d_lim, PoseParams* gn_diag) {
  PoseParams grad = PoseParams::Zero();
  PoseParams grad_3d_lim = PoseParams::Zero();
  PoseParams diag = PoseParams::Zero();

  const Skeleton::FkState fk = skel.fk_state(theta, *in.bones);
  const auto jac = skel.fk_jacobian(theta, *in.bones);

  if (in.target_p3d) {
    for (int j = 0; j < kNumJoints; ++j) {
      const Vec3 rel = fk.pos[static_cast<size_t>(j)] - fk.pos[0];
      const Vec3 r = rel - (*in.target_p3d)[j];
      const Eigen::Matrix<double, 3, kNumDof> jr =
          jac.block<3, kNumDof>(3 * j, 0) - jac.block<3, kNumDof>(0, 0);
      const PoseParams g = 2.0 * (jr.transpose() * r);
      grad += w.w3d * g;
      grad_3d_lim += g;
      if (gn_diag) diag += 2.0 * w.w3d * jr.colwise().squaredNorm().transpose();
    }
  }

  if (in.target_p2d && in.cam) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (!in.target_p2d->visible[static_cast<size_t>(j)]) continue;
      const Vec3 world = in.height_m * fk.pos[static_cast<size_t>(j)];
      const auto pr = in.cam->project(world);
      if (!pr) continue;
      const double cj = in.conf ? (*in.conf)[static_cast<size_t>(j)] : 1.0;
      const double wj = w.w2d_joint[static_cast<size_t>(j)] * cj;
      const Eigen::Matrix<double, 2, 3> duv = in.cam->projection_jacobian(world);
      const Eigen::Matrix<double, 2, kNumDof> juv =
          duv * in.height_m * jac.block<3, kNumDof>(3 * j, 0);
      const Vec2 r = pr->uv - in.target_p2d->px[static_cast<size_t>(j)];
      grad += w.w2d * wj * 2.0 * (juv.transpose() * r);
      if (gn_diag) diag += 2.0 * w.w2d * wj * juv.colwise().squaredNorm().transpose();
    }
  }

  for (int d = 6; d < kNumDof; ++d) {
    const double r = limit_residual(theta[d], limits.lo[d], limits.hi[d]);
    if (r != 0.0) {
      grad[d] += w.wlim * 2.0 * r;
      grad_3d_lim[d] += 2.0 * r;
      if (gn_diag) diag[d] += 2.0 * w.wlim;
    }
  }

  if (in.prev1 && in.prev2) {
    const PoseParams acc = theta - 2.0 * (*in.prev1) + (*in.prev2);
    grad += w.wtemp * 2.0 * acc;
    if (gn_diag) diag.array() += 2.0 * w.wtemp;
  }
  if (in.prev1) {
    const double dz = theta[2] - (*in.prev1)[2];
    if (dz != 0.0) grad[2] += w.wdepth * (dz > 0 ? 1.0 : -1.0);
  }

  if (grad_norm_3d_lim) *grad_norm_3d_lim = grad_3d_lim.norm();
  if (gn_diag) {
    diag.array() += 1e-9;
    *gn_diag = diag;
  }
  return grad;
}

FitResult fit_frame(const Skeleton& skel, const PoseParams& warm_start, const EnergyInput& in,
                    const EnergyWeights& w, const JointLimits& limits, const FitParams& params,
                    const std::array<bool, kNumDof>* dof_mask) {
  FitResult out;
  PoseParams theta = warm_start;
  EnergyBreakdown e = energy(skel, theta, in, w, limits);

  int iter = 0;
  for (; iter < params.max_iterations; ++iter) {
    PoseParams diag;
    double g3l = 0.0;
    PoseParams grad = energy_gradient(skel, theta, in, w, limits, &g3l, &diag);
    if (dof_mask) {
      for (int d = 0; d < kNumDof; ++d) {
        if (!(*dof_mask)[static_cast<size_t>(d)]) grad[d] = 0.0;
      }
    }
    out.grad_norm = grad.norm();
    if (out.grad_norm < params.grad_tolerance) break;

    const PoseParams dir = -(grad.array() / diag.array()).matrix();
    const double slope = grad.dot(dir);  // negative

    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < params.max_backtracks; ++bt) {
      const PoseParams cand = theta + alpha * dir;
      const EnergyBreakdown ec = energy(skel, cand, in, w, limits);
      if (ec.total <= e.total + params.armijo_c * alpha * slope) {
        theta = cand;
        e = ec;
        accepted = true;
        break;
      }
      alpha *= params.backtrack_shrink;
    }
    if (!accepted) {
      out.diverged = true;
      break;
    }
  }

  out.theta = theta;
  out.iterations = iter;
  out.energy = e.total;
  double g3l = 0.0;
  const PoseParams final_grad = energy_gradient(skel, theta, in, w, limits, &g3l, nullptr);
  out.grad_norm = final_grad.norm();
  out.grad_norm_3d_lim = g3l;
  return out;
}

InitResult init_track(const Skeleton& skel, const EnergyInput& in, const EnergyWeights& w,
                      const JointLimits& limits, const FitParams& params) {
  InitResult out;
  if (!in.target_p2d || !in.target_p2d->visible[kNeck]) return out;
  int visible = 0;
  for (bool v : in.target_p2d->visible) visible += v ? 1 : 0;
  if (visible < 8) return out;
  out.low_evidence = visible <= 9;

  // Phase 1: local angles and root rotation against E_3D + E_lim only.
  EnergyInput in3d = in;
  in3d.target_p2d = nullptr;
  in3d.prev1 = in3d.prev2 = nullptr;
  std::array<bool, kNumDof> mask{};
  for (int d = 3; d < kNumDof; ++d) mask[static_cast<size_t>(d)] = true;
  FitParams phase = params;
  phase.max_iterations = 150;
  PoseParams start = PoseParams::Zero();
  start[2] = 4.0 / in.height_m;  // harmless placeholder depth
  const FitResult local_fit = fit_frame(skel, start, in3d, w, limits, phase, &mask);
  PoseParams theta = local_fit.theta;

  // Phase 2: global translation and rotation against E_2D, locals fixed.
  EnergyInput in2d = in;
  in2d.target_p3d = nullptr;
  in2d.prev1 = in2d.prev2 = nullptr;
  mask.fill(false);
  for (int d = 0; d < 6; ++d) mask[static_cast<size_t>(d)] = true;

  // Depth sweep seeds the translation: place the fitted skeleton's neck on
  // the neck viewing ray at each candidate depth, keep the lowest E_2D.
  const Pose3d rel = skel.forward_kinematics(theta, *in.bones);
  const Ray neck_ray = in.cam->pixel_ray(in.target_p2d->px[kNeck]);
  double best_e = 1e300;
  PoseParams best_theta = theta;
  for (double depth = 2.0; depth <= 10.0; depth += 0.5) {
    // Point on the ray whose camera depth is `depth`.
    const double dz = (in.cam->rot * neck_ray.dir).z();
    if (dz <= 1e-9) continue;
    const Vec3 neck_world = neck_ray.origin + neck_ray.dir * (depth / dz);
    const Vec3 root_world = neck_world - in.height_m * rel[kNeck];
    PoseParams cand = theta;
    cand.head<3>() = root_world / in.height_m;
    const double ec = energy(skel, cand, in2d, w, limits).total;
    if (ec < best_e) {
      best_e = ec;
      best_theta = cand;
    }
  }
  phase.max_iterations = 120;
  const FitResult global_fit = fit_frame(skel, best_theta, in2d, w, limits, phase, &mask);

  out.theta = global_fit.theta;
  out.ok = true;
  return out;
}

std::optional<double> calibrate_height(const Vec2& foot_px, const Vec2& head_px,
                                       const CameraModel& cam, CalibError* err) {
  auto fail = [&](CalibError e) {
    if (err) *err = e;
    return std::nullopt;
  };

  const Ray foot_ray = cam.pixel_ray(foot_px);
  const auto foot_world = cam.intersect_ground(foot_ray);
  if (!foot_world) return fail(CalibError::kFootRayMissesGround);

  Vec3 horiz = foot_ray.dir - foot_ray.dir.dot(cam.ground_normal) * cam.ground_normal;
  const double horiz_norm = horiz.norm();
  if (horiz_norm < 1e-6) return fail(CalibError::kDegenerateBillboard);
  const Vec3 billboard_n = horiz / horiz_norm;

  const Ray head_ray = cam.pixel_ray(head_px);
  const double denom = billboard_n.dot(head_ray.dir);
  if (std::abs(denom) < 1e-9) return fail(CalibError::kHeadRayParallel);
  const double t = billboard_n.dot(*foot_world - head_ray.origin) / denom;
  if (t <= 0.0) return fail(CalibError::kHeadRayParallel);
  const Vec3 head_world = head_ray.origin + t * head_ray.dir;

  if (err) *err = CalibError::kOk;
  return cam.ground_normal.dot(head_world) + cam.ground_d;
}

BoneLengths estimate_bone_lengths(const Skeleton& skel, std::span<const Pose3d> frames_m,
                                  double* scale_m) {
  if (frames_m.size() < 10) {
    throw std::invalid_argument("estimate_bone_lengths: needs at least 10 frames");
  }
  BoneLengths mean{};
  for (const Pose3d& pose : frames_m) {
    for (int j = 1; j < kNumJoints; ++j) {
      mean[static_cast<size_t>(j)] += (pose[j] - pose[skel.parent(j)]).norm();
    }
  }
  for (int j = 1; j < kNumJoints; ++j) mean[static_cast<size_t>(j)] /= static_cast<double>(frames_m.size());

  const double height = skel.rest_height(mean);
  if (height <= 1e-9) throw std::invalid_argument("estimate_bone_lengths: degenerate pose");
  BoneLengths unit{};
  for (int j = 1; j < kNumJoints; ++j) unit[static_cast<size_t>(j)] = mean[static_cast<size_t>(j)] / height;
  if (scale_m) *scale_m = height;
  return unit;
}

}  // namespace mocap
