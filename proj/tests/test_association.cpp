#include <doctest.h>

#include <algorithm>
#include <set>

#include "mocap/association.hpp"
#include "mocap/simulator.hpp"
#include "support/oracles.hpp"

using namespace mocap;

namespace {

MapGrid gaussian_blob(int w, int h, double cu, double cv, double amp, double sigma = 1.5) {
  MapGrid g = MapGrid::Zero(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
      g(v, u) = std::max(g(v, u), amp * std::exp(-d2 / (2 * sigma * sigma)));
    }
  }
  return g;
}

// Checks each ground-truth subject maps to exactly one observation carrying
// all of its visible joints at the right cells, with no contamination.
bool grouping_exact(const Skeleton& skel, const RenderInfo& info,
                    const std::vector<PersonObservation>& obs, int stride) {
  std::vector<int> owner(info.gt2d.size(), -1);
  if (obs.size() != info.gt2d.size()) return false;
  for (size_t k = 0; k < info.gt2d.size(); ++k) {
    // Find the observation whose neck matches.
    int match = -1;
    for (size_t i = 0; i < obs.size(); ++i) {
      if ((obs[i].pose2d.px[kNeck] - info.gt2d[k].px[kNeck]).norm() < stride) {
        if (match >= 0) return false;
        match = static_cast<int>(i);
      }
    }
    if (match < 0) return false;
    if (std::find(owner.begin(), owner.end(), match) != owner.end()) return false;
    owner[k] = match;
    for (int j = 0; j < kNumJoints; ++j) {
      const bool vis_gt = info.gt2d[k].visible[static_cast<size_t>(j)];
      const bool vis_obs = obs[static_cast<size_t>(match)].pose2d.visible[static_cast<size_t>(j)];
      if (vis_gt != vis_obs) return false;
      if (vis_gt) {
        const double err =
            (obs[static_cast<size_t>(match)].pose2d.px[static_cast<size_t>(j)] -
             info.gt2d[k].px[static_cast<size_t>(j)])
                .norm();
        if (err > 1.0 * stride) return false;  // map-cell resolution
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("peak detection on synthetic blobs") {
  SUBCASE("single blob with sub-cell refinement") {
    const MapGrid g = gaussian_blob(64, 40, 10.0, 12.0, 0.9);
    const auto peaks = detect_peaks(g, 0.25);
    REQUIRE(peaks.size() == 1);
    CHECK(std::abs(peaks[0].u - 10.0) <= 0.5);
    CHECK(std::abs(peaks[0].v - 12.0) <= 0.5);
    CHECK(peaks[0].conf == doctest::Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("off-grid blob recovered to sub-cell accuracy") {
    const MapGrid g = gaussian_blob(64, 40, 20.3, 7.6, 1.0);
    const auto peaks = detect_peaks(g, 0.25);
    REQUIRE(peaks.size() == 1);
    CHECK(std::abs(peaks[0].u - 20.3) < 0.1);
    CHECK(std::abs(peaks[0].v - 7.6) < 0.1);
  }
  SUBCASE("two blobs five cells apart are both found") {
    MapGrid g = gaussian_blob(64, 40, 20.0, 20.0, 1.0);
    const MapGrid g2 = gaussian_blob(64, 40, 25.0, 20.0, 0.8);
    g = g.cwiseMax(g2);
    CHECK(detect_peaks(g, 0.25).size() == 2);
  }
  SUBCASE("uniform zero map yields nothing") {
    CHECK(detect_peaks(MapGrid::Zero(40, 64), 0.25).empty());
  }
  SUBCASE("values at the threshold are excluded") {
    MapGrid g = MapGrid::Zero(8, 8);
    g(4, 4) = 0.25;
    CHECK(detect_peaks(g, 0.25).empty());
    g(4, 4) = 0.26;
    CHECK(detect_peaks(g, 0.25).size() == 1);
  }
}

TEST_CASE("paf scoring basics") {
  const int w = 32, h = 32;
  const Vec2 child(5.0, 16.0), parent(25.0, 16.0);  // pointing +x

  SUBCASE("aligned field scores 1") {
    const MapGrid fx = MapGrid::Constant(h, w, 1.0);
    const MapGrid fy = MapGrid::Zero(h, w);
    const PafScore s = paf_score(child, parent, fx, fy, 10, 0.05);
    CHECK(s.score == doctest::Approx(1.0));
    CHECK(s.fraction_above == doctest::Approx(1.0));
    CHECK_FALSE(s.degenerate);
  }
  SUBCASE("perpendicular field scores 0") {
    const MapGrid fx = MapGrid::Zero(h, w);
    const MapGrid fy = MapGrid::Constant(h, w, 1.0);
    const PafScore s = paf_score(child, parent, fx, fy, 10, 0.05);
    CHECK(s.score == doctest::Approx(0.0));
    CHECK(s.fraction_above == doctest::Approx(0.0));
  }
  SUBCASE("anti-aligned field scores -1") {
    const MapGrid fx = MapGrid::Constant(h, w, -1.0);
    const MapGrid fy = MapGrid::Zero(h, w);
    CHECK(paf_score(child, parent, fx, fy, 10, 0.05).score == doctest::Approx(-1.0));
  }
  SUBCASE("zero-length limb is degenerate") {
    const MapGrid fx = MapGrid::Constant(h, w, 1.0);
    const MapGrid fy = MapGrid::Zero(h, w);
    const PafScore s = paf_score(child, child, fx, fy, 10, 0.05);
    CHECK(s.degenerate);
    CHECK(s.score == 0.0);
  }
}

TEST_CASE("noiseless spread scenes group exactly") {
  const Skeleton& skel = Skeleton::standard();
  SceneConfig cfg;
  cfg.persons = 3;
  cfg.frames = 25;
  cfg.seed = 61;
  cfg.script = "spread";
  const auto frames = generate_motion(cfg);
  StageOneMaps maps;
  RenderInfo info;
  for (const auto& frame : frames) {
    render_stage1(skel, frame, RenderParams{}, NoiseSpec::none(), &maps, &info);
    const auto obs = associate(skel, maps, AssocParams{});
    CHECK(grouping_exact(skel, info, obs, maps.stride));
  }
}

TEST_CASE("single person groups into one observation with all visible peaks") {
  const Skeleton& skel = Skeleton::standard();
  const auto frames = generate_motion(1, 2, 71);
  StageOneMaps maps;
  RenderInfo info;
  render_stage1(skel, frames[1], RenderParams{}, NoiseSpec::none(), &maps, &info);
  const auto obs = associate(skel, maps, AssocParams{});
  REQUIRE(obs.size() == 1);
  for (int j = 0; j < kNumJoints; ++j) {
    CHECK(obs[0].pose2d.visible[static_cast<size_t>(j)] == info.visible[0][static_cast<size_t>(j)]);
  }
}

TEST_CASE("a subject without a neck detection is discarded entirely") {
  const Skeleton& skel = Skeleton::standard();
  SceneConfig cfg;
  cfg.persons = 2;
  cfg.frames = 1;
  cfg.seed = 81;
  cfg.script = "spread";
  const auto frames = generate_motion(cfg);
  StageOneMaps maps;
  RenderInfo info;
  render_stage1(skel, frames[0], RenderParams{}, NoiseSpec::none(), &maps, &info);

  // Erase person 1's neck blob from the heatmap.
  const Vec2 neck_cell = info.gt2d[1].px[kNeck] / maps.stride;
  for (int v = 0; v < maps.height; ++v) {
    for (int u = 0; u < maps.width; ++u) {
      if ((Vec2(u, v) - neck_cell).norm() < 8.0) maps.heat[kNeck](v, u) = 0.0;
    }
  }
  const auto obs = associate(skel, maps, AssocParams{});
  REQUIRE(obs.size() == 1);
  CHECK((obs[0].pose2d.px[kNeck] - info.gt2d[0].px[kNeck]).norm() < maps.stride);
}

TEST_CASE("grouping is invariant to peak input order") {
  const Skeleton& skel = Skeleton::standard();
  SceneConfig cfg;
  cfg.persons = 3;
  cfg.frames = 1;
  cfg.seed = 91;
  const auto frames = generate_motion(cfg);
  StageOneMaps maps;
  render_stage1(skel, frames[0], RenderParams{}, NoiseSpec::none(), &maps, nullptr);

  std::array<std::vector<Peak>, kNumJoints> peaks;
  for (int j = 0; j < kNumJoints; ++j) {
    peaks[static_cast<size_t>(j)] = detect_peaks(maps.heat[static_cast<size_t>(j)], 0.25);
  }
  const auto base = group_parts(peaks, maps, AssocParams{});

  auto partition_of = [&](const std::vector<PersonPeaks>& groups,
                          const std::array<std::vector<Peak>, kNumJoints>& pk) {
    std::set<std::set<std::pair<int, long>>> result;
    auto sorted = pk;
    for (auto& list : sorted) {
      std::sort(list.begin(), list.end(),
                [](const Peak& a, const Peak& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
    }
    for (const auto& g : groups) {
      std::set<std::pair<int, long>> person;
      for (int j = 0; j < kNumJoints; ++j) {
        if (g[static_cast<size_t>(j)] < 0) continue;
        const Peak& p = sorted[static_cast<size_t>(j)][static_cast<size_t>(g[static_cast<size_t>(j)])];
        person.insert({j, std::lround(p.u * 16) * 4096 + std::lround(p.v * 16)});
      }
      result.insert(person);
    }
    return result;
  };

  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = peaks;
    for (auto& list : shuffled) {
      for (size_t i = list.size(); i > 1; --i) {
        std::swap(list[i - 1], list[static_cast<size_t>(rng.next_u64() % i)]);
      }
    }
    const auto out = group_parts(shuffled, maps, AssocParams{});
    CHECK(partition_of(out, shuffled) == partition_of(base, peaks));
  }
}

TEST_CASE("no peak is assigned to two persons") {
  const Skeleton& skel = Skeleton::standard();
  SceneConfig cfg;
  cfg.persons = 4;
  cfg.frames = 8;
  cfg.seed = 111;
  const auto frames = generate_motion(cfg);
  StageOneMaps maps;
  for (const auto& frame : frames) {
    render_stage1(skel, frame, RenderParams{}, NoiseSpec::uniform(0.03, 5), &maps, nullptr);
    std::array<std::vector<Peak>, kNumJoints> peaks;
    for (int j = 0; j < kNumJoints; ++j) {
      peaks[static_cast<size_t>(j)] = detect_peaks(maps.heat[static_cast<size_t>(j)], 0.25);
    }
    const auto groups = group_parts(peaks, maps, AssocParams{});
    for (int j = 0; j < kNumJoints; ++j) {
      std::set<int> used;
      for (const auto& g : groups) {
        if (g[static_cast<size_t>(j)] < 0) continue;
        CHECK(used.insert(g[static_cast<size_t>(j)]).second);
      }
    }
  }
}

TEST_CASE("extracted features round-trip the simulator encodings") {
  const Skeleton& skel = Skeleton::standard();
  SceneConfig cfg;
  cfg.persons = 2;
  cfg.frames = 10;
  cfg.seed = 121;
  cfg.script = "spread";
  const auto frames = generate_motion(cfg);
  StageOneMaps maps;
  RenderInfo info;
  for (const auto& frame : frames) {
    render_stage1(skel, frame, RenderParams{}, NoiseSpec::none(), &maps, &info);
    const auto obs = associate(skel, maps, AssocParams{});
    REQUIRE(obs.size() == 2);
    for (const auto& o : obs) {
      int k = -1;
      for (size_t g = 0; g < info.gt2d.size(); ++g) {
        if ((o.pose2d.px[kNeck] - info.gt2d[g].px[kNeck]).norm() < maps.stride) k = static_cast<int>(g);
      }
      REQUIRE(k >= 0);
      const auto truth = encode(skel, info.gt3d_m[static_cast<size_t>(k)]);
      for (int j = 0; j < kNumJoints; ++j) {
        if (!o.pose2d.visible[static_cast<size_t>(j)]) continue;
        CHECK((o.enc[static_cast<size_t>(j)] - truth[static_cast<size_t>(j)]).cwiseAbs().maxCoeff() <
              1e-6);
      }
    }
  }
}

TEST_CASE("stage2 input layout") {
  PersonObservation obs;
  obs.pose2d.visible[kNeck] = true;
  obs.pose2d.px[kNeck] = Vec2(100.0, 80.0);
  obs.conf[kNeck] = 0.9;
  obs.enc[kNeck].setConstant(0.25);

  SUBCASE("dimensions are J x (3+3J) = 18 x 57 flattened") {
    CHECK(PersonObservation::kRowWidth == 57);
    CHECK(PersonObservation::kInputWidth == 1026);
    CHECK(obs.stage2_input(600.0).size() == 1026);
  }
  SUBCASE("neck-only observation has exactly one nonzero row") {
    const Eigen::VectorXd x = obs.stage2_input(600.0);
    for (int j = 0; j < kNumJoints; ++j) {
      const double norm = x.segment(j * 57, 57).cwiseAbs().sum();
      if (j == kNeck) {
        CHECK(norm > 0.0);
      } else {
        CHECK(norm == 0.0);
      }
    }
  }
  SUBCASE("2D entries are neck-relative and diagonal-scaled") {
    obs.pose2d.visible[kHead] = true;
    obs.pose2d.px[kHead] = Vec2(130.0, 50.0);
    obs.conf[kHead] = 1.0;
    const Eigen::VectorXd x = obs.stage2_input(600.0);
    CHECK(x[kNeck * 57 + 0] == doctest::Approx(0.0));
    CHECK(x[kHead * 57 + 0] == doctest::Approx(30.0 / 600.0));
    CHECK(x[kHead * 57 + 1] == doctest::Approx(-30.0 / 600.0));
    CHECK(x[kHead * 57 + 2] == doctest::Approx(1.0));
  }
}

TEST_CASE("association survives moderate map noise on spread scenes") {
  const Skeleton& skel = Skeleton::standard();
  SceneConfig cfg;
  cfg.persons = 2;
  cfg.frames = 20;
  cfg.seed = 131;
  cfg.script = "spread";
  const auto frames = generate_motion(cfg);
  StageOneMaps maps;
  RenderInfo info;
  int good = 0;
  for (const auto& frame : frames) {
    render_stage1(skel, frame, RenderParams{}, NoiseSpec{0.05, 0.05, 0.0, 17}, &maps, &info);
    const auto obs = associate(skel, maps, AssocParams{});
    if (obs.size() != info.gt2d.size()) continue;
    bool ok = true;
    for (size_t k = 0; k < info.gt2d.size(); ++k) {
      bool found = false;
      for (const auto& o : obs) {
        if ((o.pose2d.px[kNeck] - info.gt2d[k].px[kNeck]).norm() < maps.stride) found = true;
      }
      ok = ok && found;
    }
    good += ok ? 1 : 0;
  }
  CHECK(good >= 19);
}
