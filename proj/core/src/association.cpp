#include "mocap/association.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mocap {

std::vector<Peak> detect_peaks(const MapGrid& heat, double threshold) {
  const int h = static_cast<int>(heat.rows());
  const int w = static_cast<int>(heat.cols());
  std::vector<Peak> peaks;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double val = heat(v, u);
      if (val <= threshold) continue;
      bool is_max = true;
      for (int dv = -1; dv <= 1 && is_max; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          if (du == 0 && dv == 0) continue;
          const int uu = u + du, vv = v + dv;
          if (uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
          if (heat(vv, uu) >= val) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;

      Peak p;
      p.conf = val;
      p.u = u;
      p.v = v;
      // 1D quadratic fit per axis, clamped to half a cell.
      if (u > 0 && u < w - 1) {
        const double denom = heat(v, u - 1) - 2.0 * val + heat(v, u + 1);
        if (std::abs(denom) > 1e-12) {
          p.u += std::clamp(0.5 * (heat(v, u - 1) - heat(v, u + 1)) / denom, -0.5, 0.5);
        }
      }
      if (v > 0 && v < h - 1) {
        const double denom = heat(v - 1, u) - 2.0 * val + heat(v + 1, u);
        if (std::abs(denom) > 1e-12) {
          p.v += std::clamp(0.5 * (heat(v - 1, u) - heat(v + 1, u)) / denom, -0.5, 0.5);
        }
      }
      peaks.push_back(p);
    }
  }
  return peaks;
}

PafScore paf_score(const Vec2& child, const Vec2& parent, const MapGrid& paf_x,
                   const MapGrid& paf_y, int n_samples, double s_min) {
  PafScore out;
  const Vec2 d = parent - child;
  const double len = d.norm();
  if (len < 1e-9) {
    out.degenerate = true;
    return out;
  }
  const Vec2 dir = d / len;
  int above = 0;
  double sum = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double t = n_samples > 1 ? static_cast<double>(i) / (n_samples - 1) : 0.5;
    const Vec2 s = child + t * d;
    const double fx = sample_bilinear(paf_x, s.x(), s.y());
    const double fy = sample_bilinear(paf_y, s.x(), s.y());
    const double dot = fx * dir.x() + fy * dir.y();
    sum += dot;
    if (dot > s_min) ++above;
  }
  out.score = sum / n_samples;
  out.fraction_above = static_cast<double>(above) / n_samples;
  return out;
}

namespace {

// Node id for union-find over (joint type, peak index).
int node_id(int joint, int peak) { return joint * 4096 + peak; }

struct UnionFind {
  std::vector<int> parent;
  std::vector<uint32_t> joint_mask;  // joint types present in the fragment

  int find(int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  // Refuses merges that would put two peaks of one joint type into the same
  // person fragment.
  bool unite(int a, int b) {
    const int ra = find(a), rb = find(b);
    if (ra == rb) return true;
    if (joint_mask[static_cast<size_t>(ra)] & joint_mask[static_cast<size_t>(rb)]) return false;
    parent[static_cast<size_t>(ra)] = rb;
    joint_mask[static_cast<size_t>(rb)] |= joint_mask[static_cast<size_t>(ra)];
    return true;
  }
};

}  // namespace

std::vector<PersonPeaks> group_parts(const std::array<std::vector<Peak>, kNumJoints>& peaks_in,
                                     const StageOneMaps& maps, const AssocParams& params) {
  const Skeleton& skel = Skeleton::standard();

  // Canonical peak order (by u, then v) so the partition cannot depend on the
  // order the caller listed peaks in.
  std::array<std::vector<Peak>, kNumJoints> peaks = peaks_in;
  for (auto& list : peaks) {
    std::sort(list.begin(), list.end(), [](const Peak& a, const Peak& b) {
      return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
  }

  UnionFind uf;
  uf.parent.resize(kNumJoints * 4096);
  std::iota(uf.parent.begin(), uf.parent.end(), 0);
  uf.joint_mask.assign(kNumJoints * 4096, 0);
  for (int j = 0; j < kNumJoints; ++j) {
    for (size_t pi = 0; pi < peaks[static_cast<size_t>(j)].size(); ++pi) {
      uf.joint_mask[static_cast<size_t>(node_id(j, static_cast<int>(pi)))] = 1u << j;
    }
  }

  struct Candidate {
    double score;
    int child_idx;
    int parent_idx;
  };

  for (int j = 1; j < kNumJoints; ++j) {
    const int par = skel.parent(j);
    const auto& child_peaks = peaks[static_cast<size_t>(j)];
    const auto& parent_peaks = peaks[static_cast<size_t>(par)];
    // Endpoint uniqueness holds per limb type: a neck peak pairs with at most
    // one head, one l_shoulder and one r_shoulder.
    std::vector<bool> child_used(child_peaks.size(), false);
    std::vector<bool> parent_used(parent_peaks.size(), false);
    std::vector<Candidate> cands;
    for (size_t ci = 0; ci < child_peaks.size(); ++ci) {
      for (size_t pi = 0; pi < parent_peaks.size(); ++pi) {
        const PafScore s =
            paf_score(Vec2(child_peaks[ci].u, child_peaks[ci].v),
                      Vec2(parent_peaks[pi].u, parent_peaks[pi].v),
                      maps.paf_x[static_cast<size_t>(j)], maps.paf_y[static_cast<size_t>(j)],
                      params.n_samples, params.s_min);
        if (s.degenerate) continue;
        if (s.score > params.s_min && s.fraction_above >= params.min_fraction) {
          cands.push_back({s.score, static_cast<int>(ci), static_cast<int>(pi)});
        }
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.child_idx != b.child_idx) return a.child_idx < b.child_idx;
      return a.parent_idx < b.parent_idx;
    });
    for (const Candidate& c : cands) {
      if (child_used[static_cast<size_t>(c.child_idx)]) continue;
      if (parent_used[static_cast<size_t>(c.parent_idx)]) continue;
      child_used[static_cast<size_t>(c.child_idx)] = true;
      parent_used[static_cast<size_t>(c.parent_idx)] = true;
      uf.unite(node_id(j, c.child_idx), node_id(par, c.parent_idx));
    }
  }

  // Collect fragments; each holds at most one peak per joint type because a
  // peak is used once per limb role and limbs follow the tree.
  std::vector<int> roots;
  std::vector<PersonPeaks> groups;
  auto group_of = [&](int root) {
    for (size_t i = 0; i < roots.size(); ++i) {
      if (roots[i] == root) return static_cast<int>(i);
    }
    roots.push_back(root);
    groups.emplace_back();
    groups.back().fill(-1);
    return static_cast<int>(roots.size() - 1);
  };
  for (int j = 0; j < kNumJoints; ++j) {
    for (size_t pi = 0; pi < peaks[static_cast<size_t>(j)].size(); ++pi) {
      const int g = group_of(uf.find(node_id(j, static_cast<int>(pi))));
      groups[static_cast<size_t>(g)][static_cast<size_t>(j)] = static_cast<int>(pi);
    }
  }

  // Neck gating.
  std::vector<PersonPeaks> persons;
  for (const PersonPeaks& g : groups) {
    if (g[kNeck] >= 0) persons.push_back(g);
  }
  // Stable order: by neck peak position.
  std::sort(persons.begin(), persons.end(), [&](const PersonPeaks& a, const PersonPeaks& b) {
    const Peak& pa = peaks[kNeck][static_cast<size_t>(a[kNeck])];
    const Peak& pb = peaks[kNeck][static_cast<size_t>(b[kNeck])];
    return pa.u != pb.u ? pa.u < pb.u : pa.v < pb.v;
  });
  return persons;
}

Eigen::VectorXd PersonObservation::stage2_input(double image_diagonal) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kInputWidth);
  const Vec2 neck = pose2d.px[kNeck];
  for (int j = 0; j < kNumJoints; ++j) {
    if (!pose2d.visible[static_cast<size_t>(j)]) continue;
    const int base = j * kRowWidth;
    x[base + 0] = (pose2d.px[static_cast<size_t>(j)].x() - neck.x()) / image_diagonal;
    x[base + 1] = (pose2d.px[static_cast<size_t>(j)].y() - neck.y()) / image_diagonal;
    x[base + 2] = conf[static_cast<size_t>(j)];
    x.segment<3 * kNumJoints>(base + 3) = enc[static_cast<size_t>(j)];
  }
  return x;
}

std::vector<PersonObservation> extract_features(const Skeleton& skel,
                                                const std::vector<PersonPeaks>& groups,
                                                const std::array<std::vector<Peak>, kNumJoints>& peaks_in,
                                                const StageOneMaps& maps) {
  (void)skel;
  // Same canonical order as group_parts so indices line up.
  std::array<std::vector<Peak>, kNumJoints> peaks = peaks_in;
  for (auto& list : peaks) {
    std::sort(list.begin(), list.end(), [](const Peak& a, const Peak& b) {
      return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
  }

  std::vector<PersonObservation> out;
  for (const PersonPeaks& g : groups) {
    PersonObservation obs;
    obs.index = static_cast<int>(out.size());
    for (int j = 0; j < kNumJoints; ++j) {
      const int pi = g[static_cast<size_t>(j)];
      if (pi < 0) continue;
      const Peak& p = peaks[static_cast<size_t>(j)][static_cast<size_t>(pi)];
      obs.pose2d.visible[static_cast<size_t>(j)] = true;
      obs.pose2d.px[static_cast<size_t>(j)] = Vec2(p.u * maps.stride, p.v * maps.stride);
      obs.conf[static_cast<size_t>(j)] = p.conf;
      const int u = std::clamp(static_cast<int>(std::lround(p.u)), 0, maps.width - 1);
      const int v = std::clamp(static_cast<int>(std::lround(p.v)), 0, maps.height - 1);
      obs.enc[static_cast<size_t>(j)] = maps.enc_at(j, u, v);
    }
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<PersonObservation> associate(const Skeleton& skel, const StageOneMaps& maps,
                                         const AssocParams& params) {
  std::array<std::vector<Peak>, kNumJoints> peaks;
  for (int j = 0; j < kNumJoints; ++j) {
    peaks[static_cast<size_t>(j)] = detect_peaks(maps.heat[static_cast<size_t>(j)], params.peak_threshold);
  }
  const auto groups = group_parts(peaks, maps, params);
  return extract_features(skel, groups, peaks, maps);
}

std::string groups_to_json(const std::vector<PersonObservation>& persons) {
  nlohmann::json doc = nlohmann::json::array();
  for (const PersonObservation& p : persons) {
    nlohmann::json e;
    e["person"] = p.index;
    nlohmann::json joints = nlohmann::json::array();
    for (int j = 0; j < kNumJoints; ++j) {
      if (!p.pose2d.visible[static_cast<size_t>(j)]) continue;
      joints.push_back({{"joint", j},
                        {"u", p.pose2d.px[static_cast<size_t>(j)].x()},
                        {"v", p.pose2d.px[static_cast<size_t>(j)].y()},
                        {"conf", p.conf[static_cast<size_t>(j)]}});
    }
    e["joints"] = joints;
    doc.push_back(e);
  }
  return doc.dump();
}

}  // namespace mocap
