#include <doctest.h>

#include <set>

#include "mocap/tracking.hpp"
#include "support/oracles.hpp"

using namespace mocap;
using mocap::testing::brute_force_assignment_cost;

namespace {

AppearanceHist hist_around(double hue, double sat = 0.6) {
  // Deterministic peaked histogram: mass split over two adjacent hue bins.
  AppearanceHist h;
  const int hb = std::min(29, static_cast<int>(hue * 30));
  const int sb = std::min(29, static_cast<int>(sat * 30));
  h.at(hb, sb) = 0.8;
  h.at((hb + 1) % 30, sb) = 0.2;
  return h;
}

Detection make_detection(double hue, double x_px, double z_m) {
  Detection d;
  d.hist = hist_around(hue);
  for (int j = 0; j < kNumJoints; ++j) {
    d.obs.pose2d.visible[static_cast<size_t>(j)] = true;
    d.obs.pose2d.px[static_cast<size_t>(j)] = Vec2(x_px + 3.0 * j, 100.0 + 5.0 * j);
    d.obs.conf[static_cast<size_t>(j)] = 1.0;
    d.p3d_m[j] = Vec3(0.01 * j, -0.02 * j, z_m * 0.001 * j);
  }
  return d;
}

}  // namespace

TEST_CASE("optimal assignment matches permutation brute force") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = rng.uniform_int(1, 6);
    const int m = rng.uniform_int(1, 6);
    Eigen::MatrixXd cost(n, m);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) cost(r, c) = rng.uniform(0.0, 10.0);

    const auto ours = min_cost_assignment(cost);
    double our_cost = 0.0;
    int assigned = 0;
    for (int r = 0; r < n; ++r) {
      if (ours[static_cast<size_t>(r)] >= 0) {
        our_cost += cost(r, ours[static_cast<size_t>(r)]);
        ++assigned;
      }
    }
    CHECK(assigned == std::min(n, m));
    const double best = brute_force_assignment_cost(cost, nullptr);
    CHECK(our_cost == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("dissimilarity of identical evidence is zero") {
  const Detection d = make_detection(0.4, 200.0, 4.0);
  TrackState t;
  t.hist = d.hist;
  t.p2d = d.obs.pose2d;
  t.p3d_m = d.p3d_m;
  const Dissimilarity s = dissimilarity(d, t, 0, 600.0, TrackerParams{});
  CHECK(s.total == 0.0);
  CHECK(s.pose_available);
}

TEST_CASE("pose terms decay with track age") {
  const Detection d = make_detection(0.4, 200.0, 4.0);
  TrackState t;
  t.hist = d.hist;
  t.p2d = d.obs.pose2d;
  for (int j = 0; j < kNumJoints; ++j) t.p2d.px[static_cast<size_t>(j)].x() += 50.0;
  t.p3d_m = d.p3d_m;
  const TrackerParams params;
  const double fresh = dissimilarity(d, t, 0, 600.0, params).total;
  const double stale = dissimilarity(d, t, 30, 600.0, params).total;
  CHECK(stale < fresh);
  CHECK(stale < 0.1 * fresh);
}

TEST_CASE("no common visible joints falls back to appearance plus penalty") {
  Detection d = make_detection(0.4, 200.0, 4.0);
  TrackState t;
  t.hist = d.hist;
  t.p3d_m = d.p3d_m;
  for (int j = 0; j < kNumJoints; ++j) t.p2d.visible[static_cast<size_t>(j)] = false;
  const TrackerParams params;
  const Dissimilarity s = dissimilarity(d, t, 0, 600.0, params);
  CHECK_FALSE(s.pose_available);
  CHECK(s.total == doctest::Approx(params.no_overlap_penalty).epsilon(1e-12));
}

TEST_CASE("tracker maintains identity across frames") {
  Tracker tracker{TrackerParams{}};
  const Detection a = make_detection(0.2, 150.0, 4.0);
  const Detection b = make_detection(0.7, 350.0, 5.0);

  const StepResult r0 = tracker.step(0, 0.0, {a, b}, 600.0);
  REQUIRE(r0.track_of_detection.size() == 2);
  const int id_a = r0.track_of_detection[0];
  const int id_b = r0.track_of_detection[1];
  CHECK(id_a != id_b);

  // Same detections, swapped order: ids follow the evidence, not the order.
  const StepResult r1 = tracker.step(1, 1.0 / 30, {b, a}, 600.0);
  CHECK(r1.track_of_detection[0] == id_b);
  CHECK(r1.track_of_detection[1] == id_a);
}

TEST_CASE("empty detections age every track") {
  Tracker tracker{TrackerParams{}};
  tracker.step(0, 0.0, {make_detection(0.2, 150.0, 4.0)}, 600.0);
  const StepResult r = tracker.step(1, 1.0 / 30, {}, 600.0);
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].kind == "occluded");
  CHECK(tracker.tracks().size() == 1);
}

TEST_CASE("retention boundary: re-identifiable at 90, dropped at 91") {
  const Detection d = make_detection(0.3, 200.0, 4.5);

  SUBCASE("gap of exactly 90 frames re-identifies") {
    Tracker tracker{TrackerParams{}};
    const int id = tracker.step(0, 0.0, {d}, 600.0).track_of_detection[0];
    for (int f = 1; f < 90; ++f) tracker.step(f, f / 30.0, {}, 600.0);
    const StepResult r = tracker.step(90, 3.0, {d}, 600.0);
    CHECK(r.track_of_detection[0] == id);
  }
  SUBCASE("gap of 91 frames creates a new identity") {
    Tracker tracker{TrackerParams{}};
    const int id = tracker.step(0, 0.0, {d}, 600.0).track_of_detection[0];
    for (int f = 1; f < 91; ++f) tracker.step(f, f / 30.0, {}, 600.0);
    const StepResult r = tracker.step(91, 91 / 30.0, {d}, 600.0);
    CHECK(r.track_of_detection[0] != id);
    bool dropped = false;
    for (const auto& e : r.events) dropped |= e.kind == "dropped" && e.track_id == id;
    CHECK(dropped);
  }
}

TEST_CASE("appearance refresh happens at 30 second intervals") {
  TrackerParams params;
  Tracker tracker{params};
  Detection d = make_detection(0.3, 200.0, 4.5);
  tracker.step(0, 0.0, {d}, 600.0);
  const AppearanceHist original = tracker.tracks()[0].hist;

  // Slightly different appearance before the refresh window: stored histogram
  // keeps its original value.
  d.hist = hist_around(0.33);
  tracker.step(1, 10.0, {d}, 600.0);
  CHECK(tracker.tracks()[0].hist.sq_distance(original) == 0.0);

  // Past 30 seconds the histogram is replaced and the timer restarts.
  d.hist = hist_around(0.36);
  tracker.step(2, 31.0, {d}, 600.0);
  CHECK(tracker.tracks()[0].hist.sq_distance(d.hist) == 0.0);
  d.hist = hist_around(0.40);
  tracker.step(3, 40.0, {d}, 600.0);
  CHECK(tracker.tracks()[0].hist.sq_distance(hist_around(0.36)) == 0.0);
}

TEST_CASE("appearance refresh keeps a slowly drifting subject; frozen histograms lose it") {
  auto run = [](double refresh_seconds) {
    TrackerParams params;
    params.refresh_seconds = refresh_seconds;
    Tracker tracker{params};
    int id_changes = 0;
    int last_id = -1;
    for (int f = 0; f < 3600; ++f) {  // two minutes at 30 fps
      const double time = f / 30.0;
      const double hue = 0.2 + 0.0035 * time;  // slow drift
      Detection d = make_detection(hue, 200.0, 4.5);
      // Poses drift too so re-identification leans on appearance.
      for (int j = 0; j < kNumJoints; ++j) {
        d.obs.pose2d.px[static_cast<size_t>(j)].x() += 40.0 * std::sin(time);
        d.p3d_m[j].x() += 0.2 * std::sin(time * 1.3);
      }
      const int id = tracker.step(f, time, {d}, 600.0).track_of_detection[0];
      if (last_id >= 0 && id != last_id) ++id_changes;
      last_id = id;
    }
    return id_changes;
  };
  CHECK(run(30.0) == 0);
  CHECK(run(1e9) > 0);
}

TEST_CASE("assignment respects the gate threshold") {
  TrackerParams params;
  params.threshold = 0.5;
  Tracker tracker{params};
  tracker.step(0, 0.0, {make_detection(0.2, 150.0, 4.0)}, 600.0);
  // Completely different appearance and pose: must open a new track.
  const StepResult r = tracker.step(1, 1.0 / 30, {make_detection(0.8, 400.0, 6.0)}, 600.0);
  CHECK(tracker.tracks().size() == 2);
  bool created = false;
  for (const auto& e : r.events) created |= e.kind == "created";
  CHECK(created);
}

TEST_CASE("one identity per detection per frame") {
  Tracker tracker{TrackerParams{}};
  std::vector<Detection> dets;
  for (int i = 0; i < 5; ++i) dets.push_back(make_detection(0.1 + 0.18 * i, 100.0 + 80.0 * i, 4.0));
  tracker.step(0, 0.0, dets, 600.0);
  const StepResult r = tracker.step(1, 1.0 / 30, dets, 600.0);
  std::set<int> ids(r.track_of_detection.begin(), r.track_of_detection.end());
  CHECK(ids.size() == dets.size());
}
