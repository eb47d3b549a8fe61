#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "mocap/encoding.hpp"
#include "mocap/maps.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

struct Peak {
  double u = 0.0, v = 0.0;  // map coordinates, sub-cell refined
  double conf = 0.0;        // heatmap maximum at the peak cell
};

// Local maxima above `threshold` after 3x3 non-max suppression, with
// per-axis quadratic sub-cell refinement.
std::vector<Peak> detect_peaks(const MapGrid& heat, double threshold);

struct PafScore {
  double score = 0.0;           // mean alignment, [-1, 1]
  double fraction_above = 0.0;  // share of samples individually > s_min
  bool degenerate = false;      // zero-length limb
};

// Mean over n equispaced samples of dot(F(sample), unit child->parent),
// bilinear field sampling. Child/parent in map coordinates.
PafScore paf_score(const Vec2& child, const Vec2& parent, const MapGrid& paf_x,
                   const MapGrid& paf_y, int n_samples, double s_min);

struct AssocParams {
  double peak_threshold = 0.25;
  double s_min = 0.05;
  double min_fraction = 0.7;
  int n_samples = 10;
};

// Peak index per joint type, -1 when the joint was not assigned.
using PersonPeaks = std::array<int, kNumJoints>;

// Greedy per-limb bipartite matching on PAF scores, limbs merged into
// persons, subjects without a neck discarded. Output is independent of the
// order peaks are listed in (peaks are canonicalized internally).
std::vector<PersonPeaks> group_parts(const std::array<std::vector<Peak>, kNumJoints>& peaks,
                                     const StageOneMaps& maps, const AssocParams& params);

struct PersonObservation {
  int index = 0;
  Pose2d pose2d;                                  // absolute pixels + visibility
  std::array<double, kNumJoints> conf{};          // 0 for invisible joints
  std::array<EncodingVec, kNumJoints> enc;        // zero rows for invisible joints

  PersonObservation() { enc.fill(EncodingVec::Zero()); }

  // Flattened Stage II input S_k, J x (3+3J) row-major: per joint the
  // neck-relative 2D (divided by the image diagonal), the confidence, and the
  // encoding vector. Invisible joints contribute all-zero rows.
  Eigen::VectorXd stage2_input(double image_diagonal) const;

  static constexpr int kRowWidth = 3 + 3 * kNumJoints;                 // 57
  static constexpr int kInputWidth = kNumJoints * (3 + 3 * kNumJoints);  // 1026
};

// Reads the encoding map at each grouped joint's nearest cell and assembles
// observations (2D in absolute pixels, confidences from the heatmap maxima).
std::vector<PersonObservation> extract_features(const Skeleton& skel,
                                                const std::vector<PersonPeaks>& groups,
                                                const std::array<std::vector<Peak>, kNumJoints>& peaks,
                                                const StageOneMaps& maps);

// detect + group + extract in one call.
std::vector<PersonObservation> associate(const Skeleton& skel, const StageOneMaps& maps,
                                         const AssocParams& params);

// Debug dump of groupings for overlay plotting.
std::string groups_to_json(const std::vector<PersonObservation>& persons);

}  // namespace mocap
