#include <doctest.h>

#include "mocap/fitting.hpp"
#include "mocap/one_euro.hpp"
#include "mocap/simulator.hpp"
#include "support/oracles.hpp"

using namespace mocap;
using mocap::testing::numeric_jacobian;
using mocap::testing::random_bones;
using mocap::testing::random_pose;

namespace {

struct Scenario {
  PoseParams theta_gt;
  BoneLengths bones;
  double height = 1.7;
  CameraModel cam = CameraModel::standard();
  Pose3d target3d;  // unit-height root-relative, from theta_gt
  Pose2d target2d;  // exact projections
  std::array<double, kNumJoints> conf{};

  EnergyInput input() const {
    EnergyInput in;
    in.target_p3d = &target3d;
    in.target_p2d = &target2d;
    in.conf = &conf;
    in.height_m = height;
    in.cam = &cam;
    in.bones = &bones;
    return in;
  }
};

Scenario make_scenario(uint64_t seed, bool all_visible = true) {
  const Skeleton& skel = Skeleton::standard();
  Rng rng(seed);
  Scenario s;
  s.bones = random_bones(skel, rng);
  s.theta_gt = random_pose(rng);
  s.theta_gt[0] = rng.uniform(-0.3, 0.3);
  s.theta_gt[1] = 0.55;
  s.theta_gt[2] = rng.uniform(2.0, 3.0);
  s.target3d = skel.forward_kinematics(s.theta_gt, s.bones);
  const Pose3d global = skel.forward_kinematics_global(s.theta_gt, s.bones);
  for (int j = 0; j < kNumJoints; ++j) {
    const auto pr = s.cam.project(s.height * global[j]);
    if (pr && all_visible) {
      s.target2d.px[static_cast<size_t>(j)] = pr->uv;
      s.target2d.visible[static_cast<size_t>(j)] = true;
      s.conf[static_cast<size_t>(j)] = 1.0;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("weights carry the published defaults") {
  const EnergyWeights w;
  CHECK(w.w3d == 0.9);
  CHECK(w.w2d == 1e-5);
  CHECK(w.wlim == 0.5);
  CHECK(w.wtemp == 1e-7);
  CHECK(w.wdepth == 8e-6);
  CHECK(w.w2d_joint[kLKnee] == 1.7);
  CHECK(w.w2d_joint[kRAnkle] == 1.7);
  CHECK(w.w2d_joint[kLElbow] == 1.5);
  CHECK(w.w2d_joint[kRWrist] == 2.0);
  CHECK(w.w2d_joint[kNeck] == 1.0);
  CHECK(w.w2d_joint[kLHip] == 1.0);
  CHECK(w.w2d_joint[kLShoulder] == 1.0);
}

TEST_CASE("energy at the exact fit reduces to the reprojection term") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(1);
  const EnergyWeights w;
  const JointLimits limits = JointLimits::standard();

  SUBCASE("with exact 2D as well, everything is ~zero") {
    const EnergyBreakdown e = energy(skel, s.theta_gt, s.input(), w, limits);
    CHECK(e.e3d < 1e-18);
    CHECK(e.elim == 0.0);
    CHECK(e.etemp == 0.0);
    CHECK(e.edepth == 0.0);
    CHECK(e.e2d < 1e-12);
  }
  SUBCASE("with shifted 2D only the weighted reprojection term remains") {
    Scenario shifted = s;
    for (int j = 0; j < kNumJoints; ++j) shifted.target2d.px[static_cast<size_t>(j)].x() += 5.0;
    const EnergyBreakdown e = energy(skel, s.theta_gt, shifted.input(), w, limits);
    CHECK(e.total == doctest::Approx(w.w2d * e.e2d).epsilon(1e-12));
    CHECK(e.e2d > 0.0);
  }
}

TEST_CASE("limit hinge: 0.1 rad past the bound costs 0.01 pre-weight") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(2);
  const EnergyWeights w;
  const JointLimits limits = JointLimits::standard();
  PoseParams theta = s.theta_gt;
  theta[25] = limits.lo[25] - 0.1;  // l_knee below its minimum
  EnergyInput in = s.input();
  in.target_p2d = nullptr;
  const EnergyBreakdown e = energy(skel, theta, in, w, limits);
  CHECK(e.elim == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("breakdown sums to the total exactly") {
  const Skeleton& skel = Skeleton::standard();
  Rng rng(3);
  const EnergyWeights w;
  const JointLimits limits = JointLimits::standard();
  for (int trial = 0; trial < 20; ++trial) {
    const Scenario s = make_scenario(100 + static_cast<uint64_t>(trial));
    const PoseParams prev1 = random_pose(rng);
    const PoseParams prev2 = random_pose(rng);
    EnergyInput in = s.input();
    in.prev1 = &prev1;
    in.prev2 = &prev2;
    const PoseParams theta = random_pose(rng);
    const EnergyBreakdown e = energy(skel, theta, in, w, limits);
    const double sum = w.w3d * e.e3d + w.w2d * e.e2d + w.wlim * e.elim + w.wtemp * e.etemp +
                       w.wdepth * e.edepth;
    CHECK(std::abs(e.total - sum) < 1e-12);
  }
}

TEST_CASE("missing history disables the temporal terms") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(4);
  const EnergyWeights w;
  const JointLimits limits = JointLimits::standard();
  PoseParams prev1 = s.theta_gt;
  prev1[2] += 0.2;
  EnergyInput in = s.input();
  in.prev1 = &prev1;  // prev2 still missing
  Rng rng(5);
  const EnergyBreakdown e = energy(skel, random_pose(rng), in, w, limits);
  CHECK(e.etemp == 0.0);
  CHECK(e.edepth > 0.0);  // depth term needs only one previous frame
}

TEST_CASE("analytic gradient matches finite differences, hinges included") {
  const Skeleton& skel = Skeleton::standard();
  Rng rng(6);
  const EnergyWeights w;
  const JointLimits limits = JointLimits::standard();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Scenario s = make_scenario(200 + static_cast<uint64_t>(trial));
    const PoseParams prev1 = random_pose(rng);
    const PoseParams prev2 = random_pose(rng);
    EnergyInput in = s.input();
    in.prev1 = &prev1;
    in.prev2 = &prev2;
    PoseParams theta = random_pose(rng);
    // Push a few dofs outside their limits so the hinge is active.
    theta[25] = limits.hi[25] + 0.15;
    theta[11] = limits.lo[11] - 0.25;
    // Keep the depth-difference away from zero: |.| is non-smooth there.
    if (std::abs(theta[2] - prev1[2]) < 1e-3) theta[2] += 0.01;

    const PoseParams analytic = energy_gradient(skel, theta, in, w, limits);
    const auto numeric = numeric_jacobian(
        [&](const PoseParams& t) {
          Eigen::VectorXd v(1);
          v[0] = energy(skel, t, in, w, limits).total;
          return v;
        },
        theta, 1e-6);
    worst = std::max(worst, mocap::testing::relative_error(analytic.transpose(), numeric));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gradient of the 3D term vanishes at the exact fit") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(7);
  EnergyWeights w;
  w.w2d = 0.0;
  w.wtemp = 0.0;
  w.wdepth = 0.0;
  const PoseParams g = energy_gradient(skel, s.theta_gt, s.input(), w, JointLimits::standard());
  CHECK(g.norm() < 1e-9);
}

TEST_CASE("hinge is C1 at the boundary") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(8);
  EnergyWeights w;
  w.w3d = 0.0;
  w.w2d = 0.0;
  const JointLimits limits = JointLimits::standard();
  EnergyInput in = s.input();
  in.target_p2d = nullptr;
  in.target_p3d = nullptr;
  PoseParams theta = PoseParams::Zero();
  const int d = 25;
  theta[d] = limits.hi[d] - 1e-9;
  const PoseParams inside = energy_gradient(skel, theta, in, w, limits);
  theta[d] = limits.hi[d] + 1e-9;
  const PoseParams outside = energy_gradient(skel, theta, in, w, limits);
  CHECK(std::abs(inside[d]) < 1e-12);
  CHECK(std::abs(outside[d]) < 1e-8);  // one-sided derivative limits agree
}

TEST_CASE("fit from the truth stays at the truth") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(9);
  const FitResult res = fit_frame(skel, s.theta_gt, s.input(), EnergyWeights{},
                                  JointLimits::standard(), FitParams{});
  CHECK_FALSE(res.diverged);
  CHECK((res.theta - s.theta_gt).norm() < 1e-6);
  CHECK(res.iterations <= 1);
}

TEST_CASE("fit recovers the pose from a perturbed start within 5 mm") {
  const Skeleton& skel = Skeleton::standard();
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Scenario s = make_scenario(300 + static_cast<uint64_t>(trial));
    PoseParams start = s.theta_gt;
    for (int d = 0; d < kNumDof; ++d) start[d] += rng.uniform(-0.1, 0.1);
    const FitResult res =
        fit_frame(skel, start, s.input(), EnergyWeights{}, JointLimits::standard(), FitParams{});
    CHECK_FALSE(res.diverged);
    const Pose3d fit = skel.forward_kinematics(res.theta, s.bones);
    double mpjpe = 0.0;
    for (int j = 0; j < kNumJoints; ++j) mpjpe += (fit[j] - s.target3d[j]).norm();
    mpjpe = s.height * mpjpe / kNumJoints * 1000.0;
    CHECK(mpjpe < 5.0);
  }
}

TEST_CASE("energy never increases across a fit") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(11);
  Rng rng(12);
  PoseParams start = s.theta_gt;
  for (int d = 0; d < kNumDof; ++d) start[d] += rng.uniform(-0.2, 0.2);
  const EnergyWeights w;
  const JointLimits limits = JointLimits::standard();
  const double e0 = energy(skel, start, s.input(), w, limits).total;
  const FitResult res = fit_frame(skel, start, s.input(), w, limits, FitParams{});
  CHECK(res.energy <= e0);
  CHECK_FALSE(res.diverged);
}

TEST_CASE("conflicting 2D/3D evidence lands between the single-term optima") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario base = make_scenario(13);
  Scenario conflict = base;
  for (int j = 0; j < kNumJoints; ++j) conflict.target2d.px[static_cast<size_t>(j)].x() += 20.0;

  const JointLimits limits = JointLimits::standard();
  FitParams params;
  params.max_iterations = 120;

  // Oracle optima: fit with only one data term active.
  EnergyWeights w3only;
  w3only.w2d = 0.0;
  const FitResult only3d =
      fit_frame(skel, base.theta_gt, conflict.input(), w3only, limits, params);
  EnergyWeights w2only;
  w2only.w3d = 0.0;
  w2only.w2d = 1.0;  // scale irrelevant, direction matters
  const FitResult only2d =
      fit_frame(skel, base.theta_gt, conflict.input(), w2only, limits, params);

  const EnergyWeights w;  // full energy
  const FitResult both = fit_frame(skel, base.theta_gt, conflict.input(), w, limits, params);

  const double e_both = energy(skel, both.theta, conflict.input(), w, limits).total;
  const double e_3d = energy(skel, only3d.theta, conflict.input(), w, limits).total;
  const double e_2d = energy(skel, only2d.theta, conflict.input(), w, limits).total;
  CHECK(e_both <= e_3d + 1e-12);
  CHECK(e_both <= e_2d + 1e-12);
}

TEST_CASE("two-phase initialization localizes the subject") {
  const Skeleton& skel = Skeleton::standard();
  for (uint64_t seed : {21, 22, 23}) {
    const Scenario s = make_scenario(seed);
    const InitResult init =
        init_track(skel, s.input(), EnergyWeights{}, JointLimits::standard(), FitParams{});
    REQUIRE(init.ok);
    const Vec3 root_fit = s.height * init.theta.head<3>();
    const Vec3 root_gt = s.height * s.theta_gt.head<3>();
    const double dist_to_cam = (root_gt - s.cam.center()).norm();
    CHECK((root_fit - root_gt).norm() < 0.02 * dist_to_cam);
  }
}

TEST_CASE("the 3D-only term is blind to global translation") {
  const Skeleton& skel = Skeleton::standard();
  const Scenario s = make_scenario(24);
  EnergyWeights w;
  w.w2d = 0.0;
  EnergyInput in = s.input();
  in.target_p2d = nullptr;
  PoseParams moved = s.theta_gt;
  moved[0] += 3.0;
  moved[2] += 5.0;
  const double e0 = energy(skel, s.theta_gt, in, w, JointLimits::standard()).total;
  const double e1 = energy(skel, moved, in, w, JointLimits::standard()).total;
  CHECK(e0 == doctest::Approx(e1).epsilon(1e-12));
}

TEST_CASE("init requires a neck and at least 8 visible joints") {
  const Skeleton& skel = Skeleton::standard();
  Scenario s = make_scenario(25);

  SUBCASE("no neck, no init") {
    s.target2d.visible[kNeck] = false;
    const InitResult r =
        init_track(skel, s.input(), EnergyWeights{}, JointLimits::standard(), FitParams{});
    CHECK_FALSE(r.ok);
  }
  SUBCASE("7 visible joints defer initialization") {
    Pose2d sparse;
    int kept = 0;
    for (int j = 0; j < kNumJoints && kept < 7; ++j) {
      if (!s.target2d.visible[static_cast<size_t>(j)]) continue;
      sparse.visible[static_cast<size_t>(j)] = true;
      sparse.px[static_cast<size_t>(j)] = s.target2d.px[static_cast<size_t>(j)];
      ++kept;
    }
    s.target2d = sparse;
    const InitResult r =
        init_track(skel, s.input(), EnergyWeights{}, JointLimits::standard(), FitParams{});
    CHECK_FALSE(r.ok);
  }
  SUBCASE("9 visible joints succeed with the low-evidence flag") {
    Pose2d sparse;
    int kept = 0;
    for (int j = 0; j < kNumJoints && kept < 9; ++j) {
      if (!s.target2d.visible[static_cast<size_t>(j)]) continue;
      sparse.visible[static_cast<size_t>(j)] = true;
      sparse.px[static_cast<size_t>(j)] = s.target2d.px[static_cast<size_t>(j)];
      ++kept;
    }
    s.target2d = sparse;
    const InitResult r =
        init_track(skel, s.input(), EnergyWeights{}, JointLimits::standard(), FitParams{});
    CHECK(r.ok);
    CHECK(r.low_evidence);
  }
}

TEST_CASE("height calibration recovers a standing subject's height") {
  const Skeleton& skel = Skeleton::standard();
  SceneConfig cfg;
  cfg.persons = 1;
  cfg.frames = 1;
  cfg.seed = 303;
  cfg.script = "static";
  cfg.height_min = cfg.height_max = 1.70;
  const auto frames = generate_motion(cfg);
  const PersonTruth& p = frames[0].persons[0];
  const Pose3d global = skel.forward_kinematics_global(p.theta, p.bones);

  const auto foot = frames[0].cam.project(p.height * global[kLFootTip]);
  const auto head = frames[0].cam.project(p.height * global[kHead]);
  REQUIRE(foot);
  REQUIRE(head);
  CalibError err;
  const auto h = calibrate_height(foot->uv, head->uv, frames[0].cam, &err);
  REQUIRE(h.has_value());
  CHECK(err == CalibError::kOk);
  CHECK(*h == doctest::Approx(1.70).epsilon(0.01 / 1.70));
}

TEST_CASE("degenerate calibration geometries are explicit errors") {
  SUBCASE("camera looking straight down") {
    CameraModel cam = CameraModel::standard();
    // View direction -y: rays through the principal point never build a
    // billboard (no horizontal component).
    cam.rot << 1, 0, 0, 0, 0, 1, 0, -1, 0;
    cam.trans = -cam.rot * Vec3(0.0, 5.0, 0.0);
    CalibError err;
    const auto h = calibrate_height(Vec2(256, 160), Vec2(200, 100), cam, &err);
    CHECK_FALSE(h.has_value());
    CHECK(err == CalibError::kDegenerateBillboard);
  }
  SUBCASE("foot ray pointing at the sky misses the ground") {
    const CameraModel cam = CameraModel::standard();
    CalibError err;
    const auto h = calibrate_height(Vec2(256, 10), Vec2(256, 5), cam, &err);
    CHECK_FALSE(h.has_value());
    CHECK(err == CalibError::kFootRayMissesGround);
  }
}

TEST_CASE("bone length estimation") {
  const Skeleton& skel = Skeleton::standard();
  Rng rng(31);
  const BoneLengths bones_gt = random_bones(skel, rng);
  const double height = 1.78;

  std::vector<Pose3d> frames_m;
  for (int f = 0; f < 10; ++f) {
    const Pose3d rel = skel.forward_kinematics(random_pose(rng), bones_gt);
    Pose3d m;
    for (int j = 0; j < kNumJoints; ++j) m[j] = height * rel[j];
    frames_m.push_back(m);
  }

  SUBCASE("noiseless estimates are exact") {
    double scale = 0.0;
    const BoneLengths est = estimate_bone_lengths(skel, frames_m, &scale);
    CHECK(scale == doctest::Approx(height).epsilon(1e-9));
    for (int j = 1; j < kNumJoints; ++j) {
      CHECK(est[static_cast<size_t>(j)] ==
            doctest::Approx(bones_gt[static_cast<size_t>(j)]).epsilon(1e-9));
    }
  }
  SUBCASE("fewer than 10 frames violate the precondition") {
    std::vector<Pose3d> nine(frames_m.begin(), frames_m.begin() + 9);
    CHECK_THROWS_AS(estimate_bone_lengths(skel, nine, nullptr), std::invalid_argument);
  }
  SUBCASE("5 mm noise leaves bones within ~3 mm") {
    double err_sum = 0.0;
    int err_n = 0;
    for (int trial = 0; trial < 20; ++trial) {
      auto noisy = frames_m;
      for (auto& pose : noisy) {
        for (int j = 0; j < kNumJoints; ++j) {
          pose[j] += Vec3(rng.normal(0, 0.005), rng.normal(0, 0.005), rng.normal(0, 0.005));
        }
      }
      double scale = 0.0;
      const BoneLengths est = estimate_bone_lengths(skel, noisy, &scale);
      for (int j = 1; j < kNumJoints; ++j) {
        err_sum += std::abs(est[static_cast<size_t>(j)] * scale -
                            bones_gt[static_cast<size_t>(j)] * height);
        ++err_n;
      }
    }
    CHECK(err_sum / err_n * 1000.0 < 3.0);
  }
}

TEST_CASE("one-euro filter") {
  SUBCASE("constant input is the identity after the first sample") {
    OneEuroFilter f;
    CHECK(f.filter(3.5, 0.0) == 3.5);
    for (int t = 1; t < 20; ++t) CHECK(f.filter(3.5, t / 30.0) == doctest::Approx(3.5));
  }
  SUBCASE("step input converges monotonically without overshoot") {
    OneEuroFilter f;
    f.filter(0.0, 0.0);
    double prev = 0.0;
    for (int t = 1; t < 120; ++t) {
      const double v = f.filter(1.0, t / 30.0);
      CHECK(v >= prev - 1e-12);
      CHECK(v <= 1.0 + 1e-12);
      prev = v;
    }
    CHECK(prev > 0.95);
  }
  SUBCASE("higher frequencies attenuate more") {
    auto attenuation = [](double hz) {
      OneEuroFilter f;
      double max_out = 0.0;
      for (int t = 0; t < 300; ++t) {
        const double time = t / 30.0;
        const double out = f.filter(std::sin(2 * M_PI * hz * time), time);
        if (t > 60) max_out = std::max(max_out, std::abs(out));
      }
      return max_out;
    };
    const double low = attenuation(0.3);
    const double high = attenuation(6.0);
    CHECK(high < 0.6 * low);
  }
  SUBCASE("non-monotone timestamps are an error") {
    OneEuroFilter f;
    f.filter(1.0, 1.0);
    CHECK_THROWS_AS(f.filter(1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(f.filter(1.0, 0.5), std::invalid_argument);
  }
  SUBCASE("same stream, same outputs, bit-identical") {
    OneEuroFilter a, b;
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
      const double x = rng.normal();
      CHECK(a.filter(x, t / 30.0) == b.filter(x, t / 30.0));
    }
  }
}

TEST_CASE("recovery monitor fires after exactly 30 consecutive bad frames") {
  SUBCASE("healthy track never reinitializes") {
    RecoveryMonitor m(1.0);
    for (int t = 0; t < 200; ++t) CHECK_FALSE(m.observe(0.5));
  }
  SUBCASE("the 30th consecutive violation triggers") {
    RecoveryMonitor m(1.0);
    for (int t = 0; t < 29; ++t) CHECK_FALSE(m.observe(2.0));
    CHECK(m.observe(2.0));
    CHECK(m.consecutive() == 0);  // reset after firing
  }
  SUBCASE("29 bad frames and one good frame reset the streak") {
    RecoveryMonitor m(1.0);
    for (int t = 0; t < 29; ++t) CHECK_FALSE(m.observe(2.0));
    CHECK_FALSE(m.observe(0.1));
    for (int t = 0; t < 29; ++t) CHECK_FALSE(m.observe(2.0));
  }
}
