#pragma once

#include <stdexcept>

namespace mocap {

struct OneEuroParams {
  double mincutoff = 1.0;  // Hz
  double beta = 0.007;
  double dcutoff = 1.0;  // Hz
};

// Adaptive first-order low-pass filter per scalar channel. State advances
// exactly once per filter() call; timestamps must be strictly increasing.
class OneEuroFilter {
 public:
  OneEuroFilter() = default;
  explicit OneEuroFilter(const OneEuroParams& params) : params_(params) {}

  double filter(double value, double timestamp) {
    if (!initialized_) {
      initialized_ = true;
      prev_ = value;
      dprev_ = 0.0;
      t_prev_ = timestamp;
      return value;
    }
    if (timestamp <= t_prev_) {
      throw std::invalid_argument("one-euro filter: non-monotone timestamp");
    }
    const double dt = timestamp - t_prev_;
    const double dx = (value - prev_) / dt;
    const double a_d = alpha(params_.dcutoff, dt);
    dprev_ = dprev_ + a_d * (dx - dprev_);
    const double cutoff = params_.mincutoff + params_.beta * std::abs(dprev_);
    const double a = alpha(cutoff, dt);
    prev_ = prev_ + a * (value - prev_);
    t_prev_ = timestamp;
    return prev_;
  }

  bool initialized() const { return initialized_; }
  void reset() { initialized_ = false; }

 private:
  static double alpha(double cutoff, double dt) {
    const double tau = 1.0 / (2.0 * M_PI * cutoff);
    return 1.0 / (1.0 + tau / dt);
  }

  OneEuroParams params_;
  bool initialized_ = false;
  double prev_ = 0.0;
  double dprev_ = 0.0;
  double t_prev_ = 0.0;
};

}  // namespace mocap
