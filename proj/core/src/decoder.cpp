#include "mocap/decoder.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "mocap/rng.hpp"

namespace mocap {

std::vector<int> MlpModel::standard_widths() {
  return {PersonObservation::kInputWidth, 512, 512, 256, 128, 3 * kNumJoints};
}

MlpModel MlpModel::create(const std::vector<int>& widths, uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("mlp: need at least one layer");
  MlpModel m;
  m.widths = widths;
  Rng rng(Rng::mix(seed, 0x1117));
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i];
    const int out = widths[i + 1];
    Eigen::MatrixXd w(out, in);
    const double scale = std::sqrt(2.0 / in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = scale * rng.normal();
    m.w.push_back(std::move(w));
    m.bias.push_back(Eigen::VectorXd::Zero(out));
  }
  return m;
}

Eigen::VectorXd MlpModel::forward(const Eigen::VectorXd& x) const {
  if (x.size() != input_width()) {
    throw std::invalid_argument("mlp forward: input width " + std::to_string(x.size()) +
                                ", expected " + std::to_string(input_width()));
  }
  Eigen::VectorXd a = x;
  for (size_t i = 0; i < w.size(); ++i) {
    a = (w[i] * a + bias[i]).eval();
    if (i + 1 < w.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

Eigen::MatrixXd MlpModel::forward_batch(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_width()) {
    throw std::invalid_argument("mlp forward: input width mismatch");
  }
  Eigen::MatrixXd a = x;
  for (size_t i = 0; i < w.size(); ++i) {
    a = ((a * w[i].transpose()).rowwise() + bias[i].transpose()).eval();
    if (i + 1 < w.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

double smooth_l1(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double delta) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("smooth_l1: shape mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double d = std::abs(pred(r, c) - target(r, c));
      sum += d < delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
    }
  }
  return sum / static_cast<double>(pred.size());
}

Eigen::MatrixXd smooth_l1_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                               double delta) {
  Eigen::MatrixXd g(pred.rows(), pred.cols());
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double d = pred(r, c) - target(r, c);
      g(r, c) = (std::abs(d) < delta ? d : delta * (d > 0 ? 1.0 : -1.0)) * inv_n;
    }
  }
  return g;
}

double mpjpe_mm(const Eigen::MatrixXd& pred_dm, const Eigen::MatrixXd& y_m) {
  double total = 0.0;
  const int joints = static_cast<int>(y_m.cols()) / 3;
  for (Eigen::Index r = 0; r < y_m.rows(); ++r) {
    double per_sample = 0.0;
    for (int j = 0; j < joints; ++j) {
      const double dx = pred_dm(r, 3 * j + 0) / kOutputScalePerMeter - y_m(r, 3 * j + 0);
      const double dy = pred_dm(r, 3 * j + 1) / kOutputScalePerMeter - y_m(r, 3 * j + 1);
      const double dz = pred_dm(r, 3 * j + 2) / kOutputScalePerMeter - y_m(r, 3 * j + 2);
      per_sample += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    total += per_sample / joints;
  }
  return 1000.0 * total / static_cast<double>(y_m.rows());
}

void apply_row_dropout(Eigen::MatrixXd& x, double p, uint64_t seed) {
  if (p <= 0.0) return;
  const int row_w = PersonObservation::kRowWidth;
  const int joints = static_cast<int>(x.cols()) / row_w;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(r), 0xD20));
    for (int j = 0; j < joints; ++j) {
      if (rng.uniform() < p) x.row(r).segment(j * row_w, row_w).setZero();
    }
  }
}

void ablate_encoding_inputs(Eigen::MatrixXd& x) {
  const int row_w = PersonObservation::kRowWidth;
  const int joints = static_cast<int>(x.cols()) / row_w;
  for (int j = 0; j < joints; ++j) {
    x.middleCols(j * row_w + 3, row_w - 3).setZero();
  }
}

namespace {

struct LayerGrads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  void init_like(const MlpModel& m) {
    w.clear();
    b.clear();
    for (size_t i = 0; i < m.w.size(); ++i) {
      w.push_back(Eigen::MatrixXd::Zero(m.w[i].rows(), m.w[i].cols()));
      b.push_back(Eigen::VectorXd::Zero(m.bias[i].size()));
    }
  }
  void add(const LayerGrads& o) {
    for (size_t i = 0; i < w.size(); ++i) {
      w[i] += o.w[i];
      b[i] += o.b[i];
    }
  }
};

// Forward + backward over one sample chunk; returns summed（not averaged）
// smooth-L1 numerator so chunks reduce exactly.
double chunk_backward(const MlpModel& m, const Eigen::MatrixXd& xb, const Eigen::MatrixXd& yb,
                      double inv_batch_elems, LayerGrads* grads) {
  const size_t n_layers = m.w.size();
  std::vector<Eigen::MatrixXd> acts(n_layers + 1);
  acts[0] = xb;
  for (size_t i = 0; i < n_layers; ++i) {
    acts[i + 1] = ((acts[i] * m.w[i].transpose()).rowwise() + m.bias[i].transpose()).eval();
    if (i + 1 < n_layers) acts[i + 1] = acts[i + 1].cwiseMax(0.0);
  }

  double loss_sum = 0.0;
  Eigen::MatrixXd delta(xb.rows(), yb.cols());
  for (Eigen::Index r = 0; r < xb.rows(); ++r) {
    for (Eigen::Index c = 0; c < yb.cols(); ++c) {
      const double d = acts[n_layers](r, c) - yb(r, c);
      const double ad = std::abs(d);
      loss_sum += ad < 1.0 ? 0.5 * d * d : ad - 0.5;
      delta(r, c) = (ad < 1.0 ? d : (d > 0 ? 1.0 : -1.0)) * inv_batch_elems;
    }
  }

  for (size_t i = n_layers; i-- > 0;) {
    grads->w[i] += delta.transpose() * acts[i];
    grads->b[i] += delta.colwise().sum().transpose();
    if (i > 0) {
      delta = (delta * m.w[i]).eval();
      delta.array() *= (acts[i].array() > 0.0).cast<double>();
    }
  }
  return loss_sum;
}

}  // namespace

double loss_and_gradients(const MlpModel& model, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y_dm, std::vector<Eigen::MatrixXd>* grad_w,
                          std::vector<Eigen::VectorXd>* grad_b) {
  LayerGrads grads;
  grads.init_like(model);
  const double inv = 1.0 / static_cast<double>(x.rows() * y_dm.cols());
  const double loss = chunk_backward(model, x, y_dm, inv, &grads) * inv;
  if (grad_w) *grad_w = grads.w;
  if (grad_b) *grad_b = grads.b;
  return loss;
}

TrainResult train(MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                  const TrainConfig& cfg) {
  if (x.rows() != y.rows()) throw std::invalid_argument("train: X/Y row mismatch");
  if (x.cols() != model.input_width()) throw std::invalid_argument("train: X width mismatch");

  const Eigen::Index n = x.rows();
  const Eigen::Index n_val = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(n * cfg.val_fraction));
  const Eigen::Index n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("train: dataset too small");

  // Deterministic split: shuffle indices once, tail is validation.
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  {
    Rng rng(Rng::mix(cfg.seed, 0x5F117));
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(rng.next_u64() % static_cast<uint64_t>(i + 1));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
  }

  // Validation inputs carry a frozen dropout pattern: held-out error is
  // measured under the same partial-input regime as training.
  Eigen::MatrixXd val_x(n_val, x.cols());
  Eigen::MatrixXd val_y(n_val, y.cols());
  for (Eigen::Index i = 0; i < n_val; ++i) {
    val_x.row(i) = x.row(order[static_cast<size_t>(n_train + i)]);
    val_y.row(i) = y.row(order[static_cast<size_t>(n_train + i)]);
  }
  apply_row_dropout(val_x, cfg.dropout_rows, Rng::mix(cfg.seed, 0x7A1));
  const Eigen::MatrixXd val_y_dm = y.rows() > 0 ? (val_y * kOutputScalePerMeter).eval() : val_y;

  // Adam state.
  LayerGrads m1, m2;
  m1.init_like(model);
  m2.init_like(model);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  TrainResult result;
  double best_val = 1e18;
  int since_best = 0;
  MlpModel best_model = model;

  const int threads = std::max(1, cfg.threads);
  constexpr Eigen::Index kChunk = 64;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fresh training order per epoch.
    std::vector<Eigen::Index> perm(order.begin(), order.begin() + n_train);
    Rng shuffle_rng(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch), 0xE70C));
    for (Eigen::Index i = n_train - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(shuffle_rng.next_u64() % static_cast<uint64_t>(i + 1));
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }

    double epoch_loss = 0.0;
    Eigen::Index seen = 0;
    for (Eigen::Index start = 0; start < n_train; start += cfg.batch) {
      const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch, n_train - start);
      Eigen::MatrixXd xb(bsz, x.cols());
      Eigen::MatrixXd yb(bsz, y.cols());
      for (Eigen::Index i = 0; i < bsz; ++i) {
        xb.row(i) = x.row(perm[static_cast<size_t>(start + i)]);
        yb.row(i) = y.row(perm[static_cast<size_t>(start + i)]) * kOutputScalePerMeter;
      }
      apply_row_dropout(xb, cfg.dropout_rows,
                        Rng::mix(cfg.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(start)));

      // Fixed chunking with ordered reduction keeps gradients bit-identical
      // for any thread count.
      const Eigen::Index n_chunks = (bsz + kChunk - 1) / kChunk;
      std::vector<LayerGrads> chunk_grads(static_cast<size_t>(n_chunks));
      std::vector<double> chunk_loss(static_cast<size_t>(n_chunks), 0.0);
      const double inv_elems = 1.0 / static_cast<double>(bsz * y.cols());

      auto run_chunk = [&](Eigen::Index ci) {
        const Eigen::Index lo = ci * kChunk;
        const Eigen::Index len = std::min<Eigen::Index>(kChunk, bsz - lo);
        chunk_grads[static_cast<size_t>(ci)].init_like(model);
        chunk_loss[static_cast<size_t>(ci)] =
            chunk_backward(model, xb.middleRows(lo, len), yb.middleRows(lo, len), inv_elems,
                           &chunk_grads[static_cast<size_t>(ci)]);
      };
      if (threads > 1 && n_chunks > 1) {
        std::vector<std::thread> pool;
        std::atomic<Eigen::Index> next{0};
        for (int t = 0; t < threads; ++t) {
          pool.emplace_back([&] {
            for (Eigen::Index ci = next.fetch_add(1); ci < n_chunks; ci = next.fetch_add(1)) {
              run_chunk(ci);
            }
          });
        }
        for (auto& th : pool) th.join();
      } else {
        for (Eigen::Index ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
      }

      LayerGrads grads;
      grads.init_like(model);
      double batch_loss = 0.0;
      for (Eigen::Index ci = 0; ci < n_chunks; ++ci) {
        grads.add(chunk_grads[static_cast<size_t>(ci)]);
        batch_loss += chunk_loss[static_cast<size_t>(ci)];
      }
      batch_loss /= static_cast<double>(bsz * y.cols());

      if (!std::isfinite(batch_loss)) {
        result.diverged = true;
        result.epochs_run = epoch;
        return result;
      }
      epoch_loss += batch_loss * static_cast<double>(bsz);
      seen += bsz;

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (size_t i = 0; i < model.w.size(); ++i) {
        m1.w[i] = beta1 * m1.w[i] + (1.0 - beta1) * grads.w[i];
        m2.w[i] = beta2 * m2.w[i].array().matrix() +
                  (1.0 - beta2) * grads.w[i].array().square().matrix();
        model.w[i].array() -=
            cfg.lr * (m1.w[i].array() / bc1) / ((m2.w[i].array() / bc2).sqrt() + eps);
        m1.b[i] = beta1 * m1.b[i] + (1.0 - beta1) * grads.b[i];
        m2.b[i] = beta2 * m2.b[i].array().matrix() +
                  (1.0 - beta2) * grads.b[i].array().square().matrix();
        model.bias[i].array() -=
            cfg.lr * (m1.b[i].array() / bc1) / ((m2.b[i].array() / bc2).sqrt() + eps);
      }
    }

    const Eigen::MatrixXd val_pred = model.forward_batch(val_x);
    const double val_loss = smooth_l1(val_pred, val_y_dm);
    const double val_mpjpe = mpjpe_mm(val_pred, val_y);
    result.curve.push_back({epoch, epoch_loss / static_cast<double>(seen), val_loss, val_mpjpe});
    result.epochs_run = epoch + 1;

    if (val_mpjpe < best_val - 1e-6) {
      best_val = val_mpjpe;
      best_model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  model = best_model;
  result.best_val_mpjpe_mm = best_val;
  return result;
}

namespace {
constexpr uint32_t kModelMagic = 0x4D4D4C50;  // 'MMLP'
}

void save_model(const std::string& path_bin, const MlpModel& model) {
  std::ofstream os(path_bin, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open " + path_bin);
  const uint32_t magic = kModelMagic, version = 1;
  os.write(reinterpret_cast<const char*>(&magic), 4);
  os.write(reinterpret_cast<const char*>(&version), 4);
  const auto n_widths = static_cast<uint32_t>(model.widths.size());
  os.write(reinterpret_cast<const char*>(&n_widths), 4);
  for (int wd : model.widths) {
    const auto v = static_cast<uint32_t>(wd);
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  for (size_t i = 0; i < model.w.size(); ++i) {
    // Row-major export.
    for (Eigen::Index r = 0; r < model.w[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < model.w[i].cols(); ++c) {
        const double v = model.w[i](r, c);
        os.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
    os.write(reinterpret_cast<const char*>(model.bias[i].data()),
             static_cast<std::streamsize>(model.bias[i].size() * 8));
  }

  nlohmann::json side;
  side["schema"] = 1;
  side["widths"] = model.widths;
  side["activation"] = "relu";
  side["output_scale_per_meter"] = kOutputScalePerMeter;
  side["input"] = {{"layout", "J x (2 neck-relative px / image diagonal, confidence, 3J encoding)"},
                   {"joints", kNumJoints}};
  std::ofstream js(path_bin + ".json");
  js << side.dump(2) << "\n";
}

MlpModel load_model(const std::string& path_bin) {
  std::ifstream is(path_bin, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open " + path_bin);
  uint32_t magic = 0, version = 0, n_widths = 0;
  is.read(reinterpret_cast<char*>(&magic), 4);
  is.read(reinterpret_cast<char*>(&version), 4);
  if (magic != kModelMagic || version != 1) throw std::runtime_error("load_model: bad header");
  is.read(reinterpret_cast<char*>(&n_widths), 4);
  MlpModel m;
  m.widths.resize(n_widths);
  for (uint32_t i = 0; i < n_widths; ++i) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    m.widths[i] = static_cast<int>(v);
  }
  for (size_t i = 0; i + 1 < m.widths.size(); ++i) {
    Eigen::MatrixXd w(m.widths[i + 1], m.widths[i]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        double v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        w(r, c) = v;
      }
    }
    Eigen::VectorXd b(m.widths[i + 1]);
    is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * 8));
    m.w.push_back(std::move(w));
    m.bias.push_back(std::move(b));
  }
  if (!is) throw std::runtime_error("load_model: truncated file");
  return m;
}

Pose3d decode_pose(const MlpModel& model, const PersonObservation& obs, double image_diagonal) {
  const Eigen::VectorXd out = model.forward(obs.stage2_input(image_diagonal));
  Pose3d pose;
  for (int j = 0; j < kNumJoints; ++j) {
    pose[j] = Vec3(out[3 * j], out[3 * j + 1], out[3 * j + 2]) / kOutputScalePerMeter;
  }
  pose[0] = Vec3::Zero();
  return pose;
}

}  // namespace mocap
