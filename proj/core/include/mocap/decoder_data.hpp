#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "mocap/association.hpp"
#include "mocap/simulator.hpp"

namespace mocap {

struct DatasetConfig {
  int n_samples = 50000;
  uint64_t seed = 11;
  int min_persons = 1;
  int max_persons = 3;
  int frames_per_scene = 40;
  int image_width = 512;
  int image_height = 320;
  int threads = 1;
  RenderParams render;
  AssocParams assoc;
};

// Runs simulator -> noiseless Stage I maps -> part association per frame and
// collects (standardized S_k input, root-relative ground-truth pose in
// meters) pairs. Occluded joints arrive as zero rows, matching deployment.
// Deterministic for a fixed seed regardless of thread count.
void build_decoder_dataset(const Skeleton& skel, const DatasetConfig& cfg, Eigen::MatrixXd* x,
                           Eigen::MatrixXd* y);

}  // namespace mocap
