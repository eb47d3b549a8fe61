#include "mocap/encoding.hpp"

#include <algorithm>

namespace mocap {

bool SparsityMask::supervised(int at_joint, int block) const {
  const auto& b = blocks[static_cast<size_t>(at_joint)];
  return std::find(b.begin(), b.end(), block) != b.end();
}

SparsityMask build_mask(const Skeleton& skel) {
  SparsityMask mask;
  for (int j = 0; j < kNumJoints; ++j) {
    auto& blocks = mask.blocks[static_cast<size_t>(j)];
    if (skel.parent(j) >= 0) blocks.push_back(j);  // own bone, parent-relative
    for (int c : skel.children(j)) blocks.push_back(c);
  }
  return mask;
}

std::array<EncodingVec, kNumJoints> encode(const Skeleton& skel, const Pose3d& pose,
                                           bool channel_dense) {
  const SparsityMask mask = build_mask(skel);
  std::array<EncodingVec, kNumJoints> out;
  for (int j = 0; j < kNumJoints; ++j) {
    EncodingVec& l = out[static_cast<size_t>(j)];
    l.setZero();
    if (channel_dense) {
      for (int m = 1; m < kNumJoints; ++m) {
        l.segment<3>(3 * m) = pose[m] - pose[skel.parent(m)];
      }
    } else {
      for (int m : mask.blocks[static_cast<size_t>(j)]) {
        l.segment<3>(3 * m) = pose[m] - pose[skel.parent(m)];
      }
    }
  }
  return out;
}

DecodedBones decode_bones(const Skeleton& skel,
                          const std::vector<std::pair<int, EncodingVec>>& visible) {
  DecodedBones out;
  out.bone.fill(Vec3::Zero());
  std::array<Vec3, kNumJoints> first{};
  first.fill(Vec3::Zero());

  auto take = [&](int m, const EncodingVec& l) {
    const Vec3 v = l.segment<3>(3 * m);
    int& n = out.redundancy[static_cast<size_t>(m)];
    if (n == 0) {
      first[static_cast<size_t>(m)] = v;
      out.bone[static_cast<size_t>(m)] = v;
    } else {
      out.disagreement[static_cast<size_t>(m)] = (v - first[static_cast<size_t>(m)]).norm();
      out.bone[static_cast<size_t>(m)] = 0.5 * (first[static_cast<size_t>(m)] + v);
    }
    ++n;
  };

  // Fixed read order (joint m first, then parent(m)) keeps output independent
  // of the order of `visible`.
  for (int m = 1; m < kNumJoints; ++m) {
    const int par = skel.parent(m);
    for (int want : {m, par}) {
      for (const auto& [j, l] : visible) {
        if (j == want) {
          take(m, l);
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace mocap
