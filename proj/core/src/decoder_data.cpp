#include "mocap/decoder_data.hpp"

#include <atomic>
#include <thread>
#include <vector>

#include "mocap/rng.hpp"

namespace mocap {

namespace {

struct Sample {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

void collect_scene(const Skeleton& skel, const DatasetConfig& cfg, uint64_t scene_index,
                   std::vector<Sample>* out) {
  Rng rng(Rng::mix(cfg.seed, scene_index, 0xDA7A));
  SceneConfig scene;
  scene.persons = rng.uniform_int(cfg.min_persons, cfg.max_persons);
  scene.frames = cfg.frames_per_scene;
  scene.seed = Rng::mix(cfg.seed, scene_index, 0x5CE);
  scene.script = "weave";
  scene.image_width = cfg.image_width;
  scene.image_height = cfg.image_height;

  const auto frames = generate_motion(scene);
  StageOneMaps maps;
  RenderInfo info;
  for (const SceneFrame& frame : frames) {
    render_stage1(skel, frame, cfg.render, NoiseSpec::none(), &maps, &info);
    const auto persons = associate(skel, maps, cfg.assoc);
    const double diag = frame.cam.image_diagonal();
    for (const PersonObservation& obs : persons) {
      // Match to ground truth by neck distance.
      int best = -1;
      double best_d = 24.0;  // pixels
      for (size_t k = 0; k < frames.front().persons.size(); ++k) {
        if (!info.visible[k][kNeck]) continue;
        const double d = (info.gt2d[k].px[kNeck] - obs.pose2d.px[kNeck]).norm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      if (best < 0) continue;
      Sample s;
      s.x = obs.stage2_input(diag);
      s.y.resize(3 * kNumJoints);
      for (int j = 0; j < kNumJoints; ++j) {
        s.y.segment<3>(3 * j) = info.gt3d_m[static_cast<size_t>(best)][j];
      }
      out->push_back(std::move(s));
    }
  }
}

}  // namespace

void build_decoder_dataset(const Skeleton& skel, const DatasetConfig& cfg, Eigen::MatrixXd* x,
                           Eigen::MatrixXd* y) {
  const double expected_per_scene =
      cfg.frames_per_scene * 0.8 * (cfg.min_persons + cfg.max_persons) / 2.0;
  const int threads = std::max(1, cfg.threads);

  std::vector<std::vector<Sample>> per_scene;
  uint64_t next_scene = 0;
  size_t total = 0;
  while (total < static_cast<size_t>(cfg.n_samples)) {
    const size_t missing = static_cast<size_t>(cfg.n_samples) - total;
    const auto wave =
        static_cast<uint64_t>(std::max<double>(1.0, std::ceil(missing / expected_per_scene) + 2));
    const size_t base = per_scene.size();
    per_scene.resize(base + wave);

    std::atomic<uint64_t> counter{0};
    auto worker = [&] {
      for (uint64_t i = counter.fetch_add(1); i < wave; i = counter.fetch_add(1)) {
        collect_scene(skel, cfg, next_scene + i, &per_scene[base + i]);
      }
    };
    if (threads > 1) {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    } else {
      worker();
    }
    next_scene += wave;
    total = 0;
    for (const auto& v : per_scene) total += v.size();
  }

  const auto n = static_cast<Eigen::Index>(cfg.n_samples);
  x->resize(n, PersonObservation::kInputWidth);
  y->resize(n, 3 * kNumJoints);
  Eigen::Index row = 0;
  for (const auto& scene_samples : per_scene) {
    for (const Sample& s : scene_samples) {
      if (row >= n) break;
      x->row(row) = s.x.transpose();
      y->row(row) = s.y.transpose();
      ++row;
    }
    if (row >= n) break;
  }
}

}  // namespace mocap
