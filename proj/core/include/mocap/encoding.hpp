#pragma once

#include <Eigen/Dense>
#include <array>
#include <utility>
#include <vector>

#include "mocap/skeleton.hpp"

namespace mocap {

// Per-joint encoding vector: J channel blocks of 3, block m holding the
// parent-relative position of joint m when supervised.
using EncodingVec = Eigen::Matrix<double, 3 * kNumJoints, 1>;

// Which channel blocks are supervised at each joint location: the joint's own
// parent-relative bone plus the bones of its children. The root contributes
// only its children's blocks.
struct SparsityMask {
  std::array<std::vector<int>, kNumJoints> blocks;

  bool supervised(int at_joint, int block) const;
};

SparsityMask build_mask(const Skeleton& skel);

// Encodes a root-relative pose into per-joint vectors. Unsupervised channels
// are written as zero; `channel_dense` fills every non-root block instead
// (ablation path).
std::array<EncodingVec, kNumJoints> encode(const Skeleton& skel, const Pose3d& pose,
                                           bool channel_dense = false);

struct DecodedBones {
  std::array<Vec3, kNumJoints> bone{};          // bone[m] = pos(m) - pos(parent(m))
  std::array<int, kNumJoints> redundancy{};     // number of observations used (0 = missing)
  std::array<double, kNumJoints> disagreement{};  // distance between the two copies when both seen
};

// Recovers parent-relative bone vectors from the encodings of the visible
// joints. Bone m is readable at joint m and at parent(m); both copies are
// averaged when available.
DecodedBones decode_bones(const Skeleton& skel,
                          const std::vector<std::pair<int, EncodingVec>>& visible);

}  // namespace mocap
