#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mocap/encoding.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

using MapGrid = Eigen::MatrixXd;  // (height x width), row = v, col = u

// Stage I output maps at 1/8 image resolution: per-joint heatmaps H, 2-channel
// part affinity fields F pointing joint -> kinematic parent, and 3J-channel
// pose-encoding maps L written under the channel-sparse rule.
struct StageOneMaps {
  int width = 0;   // map cells
  int height = 0;  // map cells
  int stride = 8;  // image pixels per map cell

  std::array<MapGrid, kNumJoints> heat;
  std::array<MapGrid, kNumJoints> paf_x;
  std::array<MapGrid, kNumJoints> paf_y;
  // enc[j] is (height*width) x (3*J), one row per cell (row-major over v,u).
  std::array<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, kNumJoints> enc;

  void reset(int map_w, int map_h);
  int cell_index(int u, int v) const { return v * width + u; }
  bool in_bounds(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u <= width - 1.0 && v <= height - 1.0;
  }

  EncodingVec enc_at(int j, int u, int v) const {
    return enc[static_cast<size_t>(j)].row(cell_index(u, v)).transpose();
  }
};

// Bilinear sample of one grid; clamps to the border.
double sample_bilinear(const MapGrid& g, double u, double v);

// Flat binary tensor container for golden tests and map export.
// Layout: magic 'MTNS', u32 version, u32 tensor count, then per tensor:
// u32 name length, name bytes, u32 ndim, u64 dims[], f64 data (row-major).
struct NamedTensor {
  std::string name;
  std::vector<uint64_t> dims;
  std::vector<double> data;
};

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

// Serializes H/F/L (plus dims) for one frame.
void write_maps(const std::string& path, const StageOneMaps& maps);

}  // namespace mocap
