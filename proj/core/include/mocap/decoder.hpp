#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mocap/association.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

// 5-layer fully connected network with ReLU between affine layers. The
// production instance maps the flattened Stage II input (1026) through hidden
// widths 512-512-256-128 to 54 outputs, interpreted as J root-relative
// 3-vectors in decimeters with the root forced to zero.
struct MlpModel {
  std::vector<int> widths;            // e.g. {1026, 512, 512, 256, 128, 54}
  std::vector<Eigen::MatrixXd> w;     // w[i]: widths[i+1] x widths[i]
  std::vector<Eigen::VectorXd> bias;  // bias[i]: widths[i+1]

  static std::vector<int> standard_widths();
  static MlpModel create(const std::vector<int>& widths, uint64_t seed);

  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }

  // Throws std::invalid_argument on input width mismatch.
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  // Rows are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;
};

// Mean over elements of: 0.5 d^2 for |d| < delta, else delta*(|d| - 0.5*delta).
double smooth_l1(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double delta = 1.0);
Eigen::MatrixXd smooth_l1_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                               double delta = 1.0);

struct TrainConfig {
  int epochs = 40;
  int batch = 256;
  double lr = 1e-3;
  double dropout_rows = 0.30;  // probability of zeroing each joint row
  double val_fraction = 0.10;
  int patience = 5;  // early stop after this many epochs without val improvement
  uint64_t seed = 3;
  int threads = 1;
};

struct LossPoint {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mpjpe_mm = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> curve;
  int epochs_run = 0;
  bool diverged = false;
  double best_val_mpjpe_mm = 0.0;
};

// Trains in place on (X, Y) where X rows are standardized Stage II inputs and
// Y rows are flattened root-relative poses in meters. Loss is smooth-L1 on
// decimeters (delta = 1) so the quadratic zone covers typical errors.
// Adam updates, fixed chunking with ordered reduction: results are
// bit-identical for any thread count. NaN loss aborts with diverged=true.
TrainResult train(MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                  const TrainConfig& cfg);

// Per-sample MPJPE (mm, all joints) of decimeter-scale predictions vs meter
// targets, averaged over rows.
double mpjpe_mm(const Eigen::MatrixXd& pred_dm, const Eigen::MatrixXd& y_m);

// Mean smooth-L1 loss (delta = 1) of the network on (x, y_dm) plus analytic
// weight/bias gradients. The same backward pass training uses.
double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y_dm, std::vector<Eigen::MatrixXd>* grad_w,
                          std::vector<Eigen::VectorXd>* grad_b);

// Zeroes independent joint rows of the flattened input with probability p.
void apply_row_dropout(Eigen::MatrixXd& x, double p, uint64_t seed);

// Zeroes the encoding part of every joint row (2D + confidence retained).
void ablate_encoding_inputs(Eigen::MatrixXd& x);

// Flat binary weights + JSON sidecar (schema versioned).
void save_model(const std::string& path_bin, const MlpModel& model);
MlpModel load_model(const std::string& path_bin);

constexpr double kOutputScalePerMeter = 10.0;  // network outputs decimeters

// Stage II wrapper: standardizes a PersonObservation, runs the network, and
// returns a root-relative pose in meters with the root entry zeroed.
Pose3d decode_pose(const MlpModel& model, const PersonObservation& obs, double image_diagonal);

}  // namespace mocap
