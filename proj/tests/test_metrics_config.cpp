#include <doctest.h>

#include "mocap/config.hpp"
#include "mocap/metrics.hpp"
#include "support/oracles.hpp"

using namespace mocap;

namespace {

PoseTrack exact_track(int frames, uint64_t seed) {
  Rng rng(seed);
  PoseTrack t;
  for (int f = 0; f < frames; ++f) {
    Pose3d p;
    for (int j = 0; j < kNumJoints; ++j) {
      p[j] = Vec3(rng.normal(0, 0.3), rng.normal(0, 0.3), rng.normal(0, 0.3));
    }
    t.gt_m.push_back(p);
    t.pred_m.push_back(p);
    t.detected.push_back(true);
  }
  return t;
}

// Independent PCK recount: flat loop, explicit counters, no shared code with
// evaluate_tracks.
double brute_force_pck(const std::vector<PoseTrack>& tracks, double thr_mm, bool matched_only) {
  long correct = 0, total = 0;
  for (const auto& t : tracks) {
    for (size_t f = 0; f < t.gt_m.size(); ++f) {
      if (!t.detected[f]) {
        if (!matched_only) total += kNumJoints;
        continue;
      }
      for (int j = 0; j < kNumJoints; ++j) {
        const double dx = t.pred_m[f][j].x() - t.gt_m[f][j].x();
        const double dy = t.pred_m[f][j].y() - t.gt_m[f][j].y();
        const double dz = t.pred_m[f][j].z() - t.gt_m[f][j].z();
        const double mm = 1000.0 * std::sqrt(dx * dx + dy * dy + dz * dz);
        ++total;
        if (mm <= thr_mm) ++correct;
      }
    }
  }
  return total > 0 ? 100.0 * correct / total : 0.0;
}

}  // namespace

TEST_CASE("perfect predictions score 100 / 100 / 0") {
  const std::vector<PoseTrack> tracks{exact_track(20, 1)};
  const MetricsReport r = evaluate_tracks(tracks, MetricParams{}, false);
  CHECK(r.pck == 100.0);
  CHECK(r.auc == 100.0);
  CHECK(r.mpjpe_mm == 0.0);
}

TEST_CASE("a single joint 200 mm off gives 17/18 PCK") {
  PoseTrack t = exact_track(1, 2);
  t.pred_m[0][kLWrist] += Vec3(0.2, 0.0, 0.0);
  const MetricsReport r = evaluate_tracks({t}, MetricParams{}, false);
  CHECK(r.pck == doctest::Approx(100.0 * 17.0 / 18.0));
  CHECK(r.mpjpe_mm == doctest::Approx(200.0 / 18.0));
}

TEST_CASE("vectorized PCK equals the literal recount") {
  Rng rng(3);
  std::vector<PoseTrack> tracks;
  for (int k = 0; k < 3; ++k) {
    PoseTrack t = exact_track(40, 10 + static_cast<uint64_t>(k));
    for (auto& pose : t.pred_m) {
      for (int j = 0; j < kNumJoints; ++j) {
        pose[j] += Vec3(rng.normal(0, 0.08), rng.normal(0, 0.08), rng.normal(0, 0.08));
      }
    }
    for (size_t f = 5; f < t.detected.size(); f += 7) t.detected[f] = false;
    tracks.push_back(t);
  }
  for (bool matched : {false, true}) {
    const MetricsReport r = evaluate_tracks(tracks, MetricParams{}, matched);
    CHECK(r.pck == doctest::Approx(brute_force_pck(tracks, 150.0, matched)).epsilon(1e-12));
  }
}

TEST_CASE("All mode counts undetected frames, Matched mode skips them") {
  PoseTrack t = exact_track(10, 4);
  for (int f = 0; f < 5; ++f) t.detected[static_cast<size_t>(f)] = false;
  const MetricsReport all = evaluate_tracks({t}, MetricParams{}, false);
  const MetricsReport matched = evaluate_tracks({t}, MetricParams{}, true);
  CHECK(all.pck == doctest::Approx(50.0));
  CHECK(matched.pck == doctest::Approx(100.0));
  CHECK(all.frames_detected == 5);
  CHECK(all.frames_total == 10);
}

TEST_CASE("auc averages thresholds 0..150 in 5 mm steps") {
  PoseTrack t = exact_track(1, 5);
  // All joints off by exactly 70 mm: correct for thresholds 70..150, i.e.
  // 17 of the 31 thresholds {0,5,...,150}.
  for (int j = 0; j < kNumJoints; ++j) t.pred_m[0][j] += Vec3(0.07, 0.0, 0.0);
  const MetricsReport r = evaluate_tracks({t}, MetricParams{}, false);
  CHECK(r.auc == doctest::Approx(100.0 * 17.0 / 31.0));
}

TEST_CASE("jitter metrics") {
  SUBCASE("constant-velocity motion has zero jitter") {
    std::vector<Pose3d> seq;
    for (int f = 0; f < 10; ++f) {
      Pose3d p;
      for (int j = 0; j < kNumJoints; ++j) p[j] = Vec3(0.01 * f, 0.02 * f, 0.0);
      seq.push_back(p);
    }
    CHECK(position_jitter_mm(seq) == doctest::Approx(0.0));
  }
  SUBCASE("alternating positions have jitter 4x the step") {
    std::vector<Pose3d> seq;
    for (int f = 0; f < 10; ++f) {
      Pose3d p;
      for (int j = 0; j < kNumJoints; ++j) p[j] = Vec3(f % 2 ? 0.01 : -0.01, 0, 0);
      seq.push_back(p);
    }
    CHECK(position_jitter_mm(seq) == doctest::Approx(40.0));
  }
  SUBCASE("dof jitter of a quadratic ramp is constant acceleration") {
    std::vector<PoseParams> seq;
    for (int f = 0; f < 6; ++f) {
      PoseParams p = PoseParams::Zero();
      p[0] = 0.5 * f * f;
      seq.push_back(p);
    }
    CHECK(dof_jitter(seq) == doctest::Approx(1.0 / kNumDof));
  }
}

TEST_CASE("config parsing") {
  SUBCASE("defaults survive an empty document") {
    const RunConfig c = parse_config("{}");
    CHECK(c.scene.persons == 2);
    CHECK(c.fitting.weights.w3d == 0.9);
    CHECK(c.tracker.retention_frames == 90);
  }
  SUBCASE("values are applied") {
    const RunConfig c = parse_config(R"({
      "scene": {"persons": 4, "frames": 12, "seed": 9, "script": "spread"},
      "noise": {"sigma": 0.05},
      "fitting": {"weights": {"w2d": 0.001}, "one_euro": {"beta": 0.01}},
      "decoder": {"samples": 1000, "epochs": 2}
    })");
    CHECK(c.scene.persons == 4);
    CHECK(c.noise.sigma_heat == 0.05);
    CHECK(c.noise.sigma_enc == 0.05);
    CHECK(c.fitting.weights.w2d == 0.001);
    CHECK(c.fitting.one_euro.beta == 0.01);
    CHECK(c.decoder.samples == 1000);
  }
  SUBCASE("unknown keys are rejected everywhere") {
    CHECK_THROWS_AS(parse_config(R"({"scune": {}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scene": {"person": 2}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"fitting": {"one_euro": {"betta": 1}}})"), ConfigError);
  }
  SUBCASE("invalid JSON and bad values are config errors") {
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scene": {"persons": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scene": {"image_width": 500}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema": 2})"), ConfigError);
  }
  SUBCASE("emitted config round-trips") {
    RunConfig c;
    c.scene.persons = 3;
    c.decoder.train.lr = 5e-4;
    const RunConfig back = parse_config(config_to_json(c));
    CHECK(back.scene.persons == 3);
    CHECK(back.decoder.train.lr == 5e-4);
  }
}
