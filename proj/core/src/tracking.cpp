#include "mocap/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mocap {

AppearanceHist compute_appearance(const HsImage& img, const PixelBox& box_in) {
  const PixelBox box = box_in.clipped(img.width, img.height);
  if (box.empty()) throw std::invalid_argument("compute_appearance: empty region");
  AppearanceHist hist;
  int count = 0;
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      const int hb = std::min(AppearanceHist::kBins - 1,
                              static_cast<int>(img.hue(y, x) * AppearanceHist::kBins));
      const int sb = std::min(AppearanceHist::kBins - 1,
                              static_cast<int>(img.sat(y, x) * AppearanceHist::kBins));
      hist.at(hb, sb) += 1.0;
      ++count;
    }
  }
  for (double& v : hist.p) v /= count;
  return hist;
}

// Shortest-augmenting-path assignment with potentials (O(n^2 m)). Rows are
// workers, columns jobs; requires rows <= cols internally.
namespace {

std::vector<int> assignment_rows_le_cols(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(m + 1), 0.0);
  std::vector<int> p(static_cast<size_t>(m + 1), 0);    // p[j]: row matched to column j (1-based)
  std::vector<int> way(static_cast<size_t>(m + 1), 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m + 1), kInf);
    std::vector<char> used(static_cast<size_t>(m + 1), false);
    do {
      used[static_cast<size_t>(j0)] = true;
      const int i0 = p[static_cast<size_t>(j0)];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
  }
  return row_to_col;
}

}  // namespace

std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() == 0 || cost.cols() == 0) {
    return std::vector<int>(static_cast<size_t>(cost.rows()), -1);
  }
  if (cost.rows() <= cost.cols()) return assignment_rows_le_cols(cost);
  const auto col_to_row = assignment_rows_le_cols(cost.transpose());
  std::vector<int> row_to_col(static_cast<size_t>(cost.rows()), -1);
  for (size_t c = 0; c < col_to_row.size(); ++c) {
    if (col_to_row[c] >= 0) row_to_col[static_cast<size_t>(col_to_row[c])] = static_cast<int>(c);
  }
  return row_to_col;
}

Dissimilarity dissimilarity(const Detection& det, const TrackState& track, int frames_unseen,
                            double image_diagonal, const TrackerParams& params) {
  Dissimilarity d;
  d.appearance = det.hist.sq_distance(track.hist);

  int common = 0;
  double sum2d = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!det.obs.pose2d.visible[static_cast<size_t>(j)] || !track.p2d.visible[static_cast<size_t>(j)]) continue;
    sum2d += (det.obs.pose2d.px[static_cast<size_t>(j)] - track.p2d.px[static_cast<size_t>(j)]).squaredNorm();
    ++common;
  }
  double sum3d = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    sum3d += (det.p3d_m[j] - track.p3d_m[j]).squaredNorm();
  }
  d.pose_available = common > 0;

  d.total = params.w_appearance * d.appearance / params.sigma_appearance;
  if (d.pose_available) {
    d.pose2d = sum2d / common / (image_diagonal * image_diagonal);
    d.pose3d = sum3d / kNumJoints;
    // Stale pose evidence decays; after a long occlusion the decision is
    // effectively appearance-only.
    const double decay = 1.0 / (1.0 + frames_unseen);
    d.total += decay * (params.w_pose2d * d.pose2d / params.sigma_pose2d +
                        params.w_pose3d * d.pose3d / params.sigma_pose3d);
  } else {
    d.total += params.no_overlap_penalty;
  }
  return d;
}

TrackState* Tracker::find(int id) {
  for (TrackState& t : tracks_) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

StepResult Tracker::step(int frame, double time_s, const std::vector<Detection>& detections,
                         double image_diagonal) {
  StepResult out;
  out.track_of_detection.assign(detections.size(), -1);

  const int n_det = static_cast<int>(detections.size());
  const int n_trk = static_cast<int>(tracks_.size());

  std::vector<int> det_match(static_cast<size_t>(n_det), -1);  // index into tracks_
  if (n_det > 0 && n_trk > 0) {
    Eigen::MatrixXd cost(n_det, n_trk);
    for (int i = 0; i < n_det; ++i) {
      for (int k = 0; k < n_trk; ++k) {
        const int unseen = frame - tracks_[static_cast<size_t>(k)].last_seen_frame - 1;
        cost(i, k) = dissimilarity(detections[static_cast<size_t>(i)], tracks_[static_cast<size_t>(k)],
                                   unseen, image_diagonal, params_).total;
      }
    }
    const auto match = min_cost_assignment(cost);
    for (int i = 0; i < n_det; ++i) {
      const int k = match[static_cast<size_t>(i)];
      if (k >= 0 && cost(i, k) <= params_.threshold) det_match[static_cast<size_t>(i)] = k;
    }
  }

  std::vector<bool> track_matched(static_cast<size_t>(n_trk), false);
  for (int i = 0; i < n_det; ++i) {
    const int k = det_match[static_cast<size_t>(i)];
    const Detection& det = detections[static_cast<size_t>(i)];
    if (k >= 0) {
      TrackState& t = tracks_[static_cast<size_t>(k)];
      track_matched[static_cast<size_t>(k)] = true;
      t.p2d = det.obs.pose2d;
      t.p3d_m = det.p3d_m;
      t.last_seen_frame = frame;
      if (time_s - t.last_refresh_time >= params_.refresh_seconds) {
        t.hist = det.hist;
        t.last_refresh_time = time_s;
      }
      out.track_of_detection[static_cast<size_t>(i)] = t.id;
      out.events.push_back({frame, "matched", t.id});
    } else {
      TrackState t;
      t.id = next_id_++;
      t.hist = det.hist;
      t.p2d = det.obs.pose2d;
      t.p3d_m = det.p3d_m;
      t.last_seen_frame = frame;
      t.created_frame = frame;
      t.last_refresh_time = time_s;
      tracks_.push_back(t);
      out.track_of_detection[static_cast<size_t>(i)] = t.id;
      out.events.push_back({frame, "created", t.id});
    }
  }

  // Age out stale tracks; a track unseen for exactly retention_frames is
  // still matchable above, one more frame drops it.
  std::vector<TrackState> kept;
  for (int k = 0; k < n_trk; ++k) {
    TrackState& t = tracks_[static_cast<size_t>(k)];
    if (track_matched[static_cast<size_t>(k)]) {
      kept.push_back(t);
      continue;
    }
    const int unseen = frame - t.last_seen_frame;
    if (unseen > params_.retention_frames) {
      out.events.push_back({frame, "dropped", t.id});
    } else {
      out.events.push_back({frame, "occluded", t.id});
      kept.push_back(t);
    }
  }
  // Newly created tracks sit past index n_trk.
  for (size_t k = static_cast<size_t>(n_trk); k < tracks_.size(); ++k) kept.push_back(tracks_[k]);
  tracks_ = std::move(kept);

  return out;
}

}  // namespace mocap
