#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace mocap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr int kNumJoints = 18;
inline constexpr int kNumDof = 29;

enum JointId : int {
  kPelvis = 0,
  kSpine,
  kNeck,
  kHead,
  kLShoulder,
  kRShoulder,
  kLElbow,
  kRElbow,
  kLWrist,
  kRWrist,
  kLHip,
  kRHip,
  kLKnee,
  kRKnee,
  kLAnkle,
  kRAnkle,
  kLFootTip,
  kRFootTip,
};

// 29 pose parameters: [0..2] root translation (x,y,z), [3..5] root rotation
// (intrinsic Z-X-Y Euler), [6..28] local joint angles. Translation is in
// unit-height skeleton coordinates; metric placement multiplies by person
// height. Index 2 drives the depth (z) direction.
using PoseParams = Eigen::Matrix<double, kNumDof, 1>;

// Per-joint bone length (distance joint->parent), entry 0 unused for root.
using BoneLengths = std::array<double, kNumJoints>;

struct Pose3d {
  std::array<Vec3, kNumJoints> p;

  Vec3& operator[](int j) { return p[static_cast<size_t>(j)]; }
  const Vec3& operator[](int j) const { return p[static_cast<size_t>(j)]; }
};

struct Pose2d {
  std::array<Vec2, kNumJoints> px;
  std::array<bool, kNumJoints> visible{};

  Pose2d() { px.fill(Vec2::Zero()); }
};

struct JointDef {
  std::string name;
  int parent;        // -1 for root
  Vec3 rest_dir;     // unit direction of the rest offset from parent
  double rest_len;   // default bone length, unit-height skeleton
  int dof_offset;    // first index into PoseParams, -1 if none
  int dof_count;     // 0..3
  std::string axes;  // rotation axis per local dof, e.g. "ZXY", "X"
};

// Fixed 18-joint kinematic tree with a 29-DOF parameterization. All methods
// are pure and the instance is immutable after construction, so a single
// default skeleton can be shared freely across threads.
class Skeleton {
 public:
  static const Skeleton& standard();

  const std::array<JointDef, kNumJoints>& joints() const { return joints_; }
  const JointDef& joint(int j) const { return joints_[static_cast<size_t>(j)]; }
  int parent(int j) const { return joints_[static_cast<size_t>(j)].parent; }
  const std::vector<int>& children(int j) const { return children_[static_cast<size_t>(j)]; }
  int joint_index(const std::string& name) const;  // -1 if unknown

  // Default bone lengths; rest-pose vertical extent is exactly 1.
  BoneLengths default_bones() const;

  // Vertical extent (max y - min y) of the rest pose under the given bone
  // lengths. Used to renormalize estimated bones to unit skeleton height.
  double rest_height(const BoneLengths& bones) const;

  // Root-relative joint positions: root at origin, global rotation applied,
  // translation ignored.
  Pose3d forward_kinematics(const PoseParams& theta, const BoneLengths& bones) const;

  // Same but with the root translation applied (unit-height coordinates).
  Pose3d forward_kinematics_global(const PoseParams& theta, const BoneLengths& bones) const;

  // Analytic d(global positions)/d(theta), (3*J) x D, rows grouped by joint.
  // Root-translation columns are identity blocks for every joint.
  Eigen::Matrix<double, 3 * kNumJoints, kNumDof> fk_jacobian(const PoseParams& theta,
                                                             const BoneLengths& bones) const;

  // FK with per-joint world rotations exposed; shared by jacobian and energy.
  struct FkState {
    std::array<Vec3, kNumJoints> pos;  // global (translation included)
    std::array<Mat3, kNumJoints> rot;  // accumulated world rotation per joint
  };
  FkState fk_state(const PoseParams& theta, const BoneLengths& bones) const;

  // True if joint q's rotation moves joint j (j strict descendant of q).
  bool is_descendant(int j, int q) const { return descendant_[static_cast<size_t>(q)][static_cast<size_t>(j)]; }

  // JSON document with joint names, parents, DOF layout and rest offsets; the
  // single source of truth shared by the simulator and the test suites.
  std::string to_json() const;
  static Skeleton from_json(const std::string& text);

 private:
  Skeleton();
  explicit Skeleton(const std::array<JointDef, kNumJoints>& defs);
  void finalize();

  std::array<JointDef, kNumJoints> joints_;
  std::array<std::vector<int>, kNumJoints> children_;
  std::array<std::array<bool, kNumJoints>, kNumJoints> descendant_{};
};

// Anatomical joint-angle limits for the 23 local DOF; entries 0..5 are wide
// open (no limits on the global parameters).
struct JointLimits {
  PoseParams lo;
  PoseParams hi;

  static JointLimits standard();
};

Mat3 euler_zxy(double az, double ax, double ay);

}  // namespace mocap
