#pragma once

#include <Eigen/Dense>
#include <array>

#include "mocap/skeleton.hpp"

namespace mocap {

// Synthetic hue/saturation image, the simulator's stand-in for real pixels.
// Both channels live in [0, 1).
struct HsImage {
  int width = 0;
  int height = 0;
  Eigen::MatrixXf hue;  // (height x width)
  Eigen::MatrixXf sat;

  void reset(int w, int h) {
    width = w;
    height = h;
    hue.setZero(h, w);
    sat.setZero(h, w);
  }
};

struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  PixelBox clipped(int w, int h) const {
    return {std::max(x0, 0), std::max(y0, 0), std::min(x1, w), std::min(y1, h)};
  }
};

// 30x30 joint histogram over (hue, saturation), normalized to sum 1.
struct AppearanceHist {
  static constexpr int kBins = 30;
  std::array<double, kBins * kBins> p{};

  double& at(int hbin, int sbin) { return p[static_cast<size_t>(hbin * kBins + sbin)]; }
  double at(int hbin, int sbin) const { return p[static_cast<size_t>(hbin * kBins + sbin)]; }

  double sq_distance(const AppearanceHist& other) const {
    double d = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      const double e = p[i] - other.p[i];
      d += e * e;
    }
    return d;
  }
};

// Histogram of the pixels inside `box`; throws std::invalid_argument on an
// empty region.
AppearanceHist compute_appearance(const HsImage& img, const PixelBox& box);

}  // namespace mocap
