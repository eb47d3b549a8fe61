#include "mocap/skeleton.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace mocap {

namespace {

Mat3 axis_rot(char axis, double angle) {
  switch (axis) {
    case 'X':
      return Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix();
    case 'Y':
      return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
    case 'Z':
      return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
    default:
      throw std::logic_error("bad rotation axis");
  }
}

Vec3 axis_vec(char axis) {
  switch (axis) {
    case 'X':
      return Vec3::UnitX();
    case 'Y':
      return Vec3::UnitY();
    case 'Z':
      return Vec3::UnitZ();
    default:
      throw std::logic_error("bad rotation axis");
  }
}

struct JointSeed {
  const char* name;
  int parent;
  Vec3 rest_offset;  // unnormalized, unit-height T-pose
  int dof_offset;
  int dof_count;
  const char* axes;
};

// T-pose, Y up, Z forward, total vertical extent exactly 1.0 (head joint at
// +0.470 above the pelvis, foot tips at -0.530). Proportions follow common
// anthropometric tables. DOF split: global 6, spine 2, neck 3, shoulders 3
// each, elbows 1 each, hips 3 each, knees 1 each, ankles 1 each -> 29.
// The pelvis rotation occupies dof 3..5; translation 0..2 is handled by the
// FK directly and carries no rotation axes.
const std::array<JointSeed, kNumJoints> kJointSeeds = {{
    {"pelvis", -1, {0.0, 0.0, 0.0}, 3, 3, "ZXY"},
    {"spine", kPelvis, {0.0, 0.190, 0.0}, 6, 2, "XZ"},
    {"neck", kSpine, {0.0, 0.170, 0.0}, 8, 3, "ZXY"},
    {"head", kNeck, {0.0, 0.110, 0.0}, -1, 0, ""},
    {"l_shoulder", kNeck, {0.105, -0.035, 0.0}, 11, 3, "ZXY"},
    {"r_shoulder", kNeck, {-0.105, -0.035, 0.0}, 14, 3, "ZXY"},
    {"l_elbow", kLShoulder, {0.186, 0.0, 0.0}, 17, 1, "Y"},
    {"r_elbow", kRShoulder, {-0.186, 0.0, 0.0}, 18, 1, "Y"},
    {"l_wrist", kLElbow, {0.146, 0.0, 0.0}, -1, 0, ""},
    {"r_wrist", kRElbow, {-0.146, 0.0, 0.0}, -1, 0, ""},
    {"l_hip", kPelvis, {0.095, -0.045, 0.0}, 19, 3, "ZXY"},
    {"r_hip", kPelvis, {-0.095, -0.045, 0.0}, 22, 3, "ZXY"},
    {"l_knee", kLHip, {0.0, -0.230, 0.0}, 25, 1, "X"},
    {"r_knee", kRHip, {0.0, -0.230, 0.0}, 26, 1, "X"},
    {"l_ankle", kLKnee, {0.0, -0.205, 0.0}, 27, 1, "X"},
    {"r_ankle", kRKnee, {0.0, -0.205, 0.0}, 28, 1, "X"},
    {"l_foot_tip", kLAnkle, {0.0, -0.050, 0.123}, -1, 0, ""},
    {"r_foot_tip", kRAnkle, {0.0, -0.050, 0.123}, -1, 0, ""},
}};

Mat3 local_rotation(const JointDef& def, const PoseParams& theta) {
  Mat3 r = Mat3::Identity();
  for (int i = 0; i < def.dof_count; ++i) {
    r = r * axis_rot(def.axes[static_cast<size_t>(i)], theta[def.dof_offset + i]);
  }
  return r;
}

}  // namespace

Mat3 euler_zxy(double az, double ax, double ay) {
  return axis_rot('Z', az) * axis_rot('X', ax) * axis_rot('Y', ay);
}

Skeleton::Skeleton() {
  for (int j = 0; j < kNumJoints; ++j) {
    const JointSeed& s = kJointSeeds[static_cast<size_t>(j)];
    JointDef& d = joints_[static_cast<size_t>(j)];
    d.name = s.name;
    d.parent = s.parent;
    d.rest_len = s.rest_offset.norm();
    d.rest_dir = d.rest_len > 0.0 ? Vec3(s.rest_offset / d.rest_len) : Vec3::Zero();
    d.dof_offset = s.dof_offset;
    d.dof_count = s.dof_count;
    d.axes = s.axes;
  }
  finalize();
}

Skeleton::Skeleton(const std::array<JointDef, kNumJoints>& defs) : joints_(defs) { finalize(); }

void Skeleton::finalize() {
  int roots = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    int p = joints_[static_cast<size_t>(j)].parent;
    if (p < 0) {
      ++roots;
      continue;
    }
    if (p >= kNumJoints || p == j) throw std::invalid_argument("skeleton: bad parent index");
    children_[static_cast<size_t>(p)].push_back(j);
  }
  if (roots != 1 || joints_[0].parent != -1) {
    throw std::invalid_argument("skeleton: expected a single root at index 0");
  }
  // Parents must precede children so one forward pass suffices.
  for (int j = 1; j < kNumJoints; ++j) {
    if (joints_[static_cast<size_t>(j)].parent >= j) {
      throw std::invalid_argument("skeleton: joints not in topological order");
    }
  }
  for (int j = 1; j < kNumJoints; ++j) {
    int a = joints_[static_cast<size_t>(j)].parent;
    while (a >= 0) {
      descendant_[static_cast<size_t>(a)][static_cast<size_t>(j)] = true;
      a = joints_[static_cast<size_t>(a)].parent;
    }
  }
}

const Skeleton& Skeleton::standard() {
  static const Skeleton instance;
  return instance;
}

int Skeleton::joint_index(const std::string& name) const {
  for (int j = 0; j < kNumJoints; ++j) {
    if (joints_[static_cast<size_t>(j)].name == name) return j;
  }
  return -1;
}

BoneLengths Skeleton::default_bones() const {
  BoneLengths b{};
  for (int j = 0; j < kNumJoints; ++j) b[static_cast<size_t>(j)] = joints_[static_cast<size_t>(j)].rest_len;
  return b;
}

double Skeleton::rest_height(const BoneLengths& bones) const {
  std::array<double, kNumJoints> y{};
  double lo = 0.0, hi = 0.0;
  for (int j = 1; j < kNumJoints; ++j) {
    const JointDef& d = joints_[static_cast<size_t>(j)];
    y[static_cast<size_t>(j)] = y[static_cast<size_t>(d.parent)] + d.rest_dir.y() * bones[static_cast<size_t>(j)];
    lo = std::min(lo, y[static_cast<size_t>(j)]);
    hi = std::max(hi, y[static_cast<size_t>(j)]);
  }
  return hi - lo;
}

Skeleton::FkState Skeleton::fk_state(const PoseParams& theta, const BoneLengths& bones) const {
  FkState s;
  s.pos[0] = theta.head<3>();
  s.rot[0] = local_rotation(joints_[0], theta);
  for (int j = 1; j < kNumJoints; ++j) {
    const JointDef& d = joints_[static_cast<size_t>(j)];
    const auto pj = static_cast<size_t>(d.parent);
    s.pos[static_cast<size_t>(j)] =
        s.pos[pj] + s.rot[pj] * (d.rest_dir * bones[static_cast<size_t>(j)]);
    s.rot[static_cast<size_t>(j)] = d.dof_count > 0 ? Mat3(s.rot[pj] * local_rotation(d, theta)) : s.rot[pj];
  }
  return s;
}

Pose3d Skeleton::forward_kinematics(const PoseParams& theta, const BoneLengths& bones) const {
  FkState s = fk_state(theta, bones);
  Pose3d out;
  for (int j = 0; j < kNumJoints; ++j) out[j] = s.pos[static_cast<size_t>(j)] - s.pos[0];
  return out;
}

Pose3d Skeleton::forward_kinematics_global(const PoseParams& theta, const BoneLengths& bones) const {
  FkState s = fk_state(theta, bones);
  Pose3d out;
  for (int j = 0; j < kNumJoints; ++j) out[j] = s.pos[static_cast<size_t>(j)];
  return out;
}

Eigen::Matrix<double, 3 * kNumJoints, kNumDof> Skeleton::fk_jacobian(const PoseParams& theta,
                                                                     const BoneLengths& bones) const {
  Eigen::Matrix<double, 3 * kNumJoints, kNumDof> jac;
  jac.setZero();
  FkState s = fk_state(theta, bones);

  for (int j = 0; j < kNumJoints; ++j) {
    jac.block<3, 3>(3 * j, 0).setIdentity();
  }

  for (int q = 0; q < kNumJoints; ++q) {
    const JointDef& d = joints_[static_cast<size_t>(q)];
    const int rot_offset = d.dof_offset;
    const int rot_count = d.dof_count;
    if (rot_count == 0) continue;

    const Mat3 parent_rot = q == 0 ? Mat3::Identity() : s.rot[static_cast<size_t>(joints_[static_cast<size_t>(q)].parent)];
    const Vec3 pivot = s.pos[static_cast<size_t>(q)];

    // World axis of the i-th local dof: parent rotation times the partial
    // product of the preceding intrinsic rotations.
    Mat3 prefix = Mat3::Identity();
    for (int i = 0; i < rot_count; ++i) {
      const char axis = d.axes[static_cast<size_t>(i)];
      const Vec3 w = parent_rot * prefix * axis_vec(axis);
      const int col = rot_offset + i;
      for (int j = 0; j < kNumJoints; ++j) {
        if (!descendant_[static_cast<size_t>(q)][static_cast<size_t>(j)]) continue;
        jac.block<3, 1>(3 * j, col) = w.cross(s.pos[static_cast<size_t>(j)] - pivot);
      }
      prefix = prefix * axis_rot(axis, theta[col]);
    }
  }
  return jac;
}

std::string Skeleton::to_json() const {
  nlohmann::json doc;
  doc["schema"] = 1;
  nlohmann::json joints = nlohmann::json::array();
  for (int j = 0; j < kNumJoints; ++j) {
    const JointDef& d = joints_[static_cast<size_t>(j)];
    nlohmann::json e;
    e["name"] = d.name;
    e["parent"] = d.parent < 0 ? nlohmann::json(nullptr) : nlohmann::json(joints_[static_cast<size_t>(d.parent)].name);
    e["rest_dir"] = {d.rest_dir.x(), d.rest_dir.y(), d.rest_dir.z()};
    e["rest_len"] = d.rest_len;
    e["dof_offset"] = d.dof_offset;
    e["dof_count"] = d.dof_count;
    e["axes"] = d.axes;
    joints.push_back(e);
  }
  doc["joints"] = joints;
  return doc.dump(2);
}

Skeleton Skeleton::from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  if (doc.at("schema").get<int>() != 1) throw std::invalid_argument("skeleton json: unknown schema");
  const auto& joints = doc.at("joints");
  if (joints.size() != kNumJoints) throw std::invalid_argument("skeleton json: expected 18 joints");

  std::array<JointDef, kNumJoints> defs;
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& e = joints[static_cast<size_t>(j)];
    JointDef& d = defs[static_cast<size_t>(j)];
    d.name = e.at("name").get<std::string>();
    d.rest_dir = Vec3(e.at("rest_dir")[0].get<double>(), e.at("rest_dir")[1].get<double>(),
                      e.at("rest_dir")[2].get<double>());
    d.rest_len = e.at("rest_len").get<double>();
    d.dof_offset = e.at("dof_offset").get<int>();
    d.dof_count = e.at("dof_count").get<int>();
    d.axes = e.at("axes").get<std::string>();
    d.parent = -1;
  }
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& e = joints[static_cast<size_t>(j)];
    if (e.at("parent").is_null()) continue;
    const std::string pname = e.at("parent").get<std::string>();
    int p = -1;
    for (int i = 0; i < kNumJoints; ++i) {
      if (defs[static_cast<size_t>(i)].name == pname) p = i;
    }
    if (p < 0) throw std::invalid_argument("skeleton json: unknown parent " + pname);
    defs[static_cast<size_t>(j)].parent = p;
  }
  return Skeleton(defs);
}

JointLimits JointLimits::standard() {
  JointLimits l;
  l.lo.setConstant(-1e9);
  l.hi.setConstant(1e9);
  auto set = [&l](int dof, double lo, double hi) {
    l.lo[dof] = lo;
    l.hi[dof] = hi;
  };
  set(6, -0.50, 0.60);   // spine X
  set(7, -0.45, 0.45);   // spine Z
  set(8, -0.70, 0.70);   // neck Z
  set(9, -0.60, 0.80);   // neck X
  set(10, -1.00, 1.00);  // neck Y
  set(11, -1.20, 1.50);  // l_shoulder Z
  set(12, -1.20, 1.20);  // l_shoulder X
  set(13, -1.30, 1.30);  // l_shoulder Y
  set(14, -1.50, 1.20);  // r_shoulder Z
  set(15, -1.20, 1.20);  // r_shoulder X
  set(16, -1.30, 1.30);  // r_shoulder Y
  set(17, -2.40, 0.10);  // l_elbow
  set(18, -0.10, 2.40);  // r_elbow
  set(19, -0.50, 1.00);  // l_hip Z
  set(20, -2.00, 0.50);  // l_hip X
  set(21, -0.80, 0.80);  // l_hip Y
  set(22, -1.00, 0.50);  // r_hip Z
  set(23, -2.00, 0.50);  // r_hip X
  set(24, -0.80, 0.80);  // r_hip Y
  set(25, -0.05, 2.20);  // l_knee
  set(26, -0.05, 2.20);  // r_knee
  set(27, -0.60, 0.80);  // l_ankle
  set(28, -0.60, 0.80);  // r_ankle
  return l;
}

}  // namespace mocap
