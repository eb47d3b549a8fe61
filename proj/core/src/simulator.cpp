#include "mocap/simulator.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mocap/encoding.hpp"
#include "mocap/rng.hpp"

namespace mocap {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double wrap01(double x) { return x - std::floor(x); }

// One angle channel: center plus two low-frequency sinusoids, amplitudes
// sized so the channel never leaves [lo+margin, hi-margin].
struct DofWave {
  double center = 0.0;
  double a1 = 0.0, f1 = 0.0, p1 = 0.0;
  double a2 = 0.0, f2 = 0.0, p2 = 0.0;

  double eval(double t) const {
    return center + a1 * std::sin(kTwoPi * f1 * t + p1) + a2 * std::sin(kTwoPi * f2 * t + p2);
  }
};

struct PersonMotion {
  double x0 = 0.0, z0 = 4.0;
  double ax = 0.0, fx = 0.0, px = 0.0;
  double az = 0.0, fz = 0.0, pz = 0.0;
  bool crossing = false;
  double cross_from = 0.0, cross_to = 0.0;
  bool jump = false;
  std::array<DofWave, kNumDof> waves{};  // local dofs 6.. plus root rotation 3..5
  double duration = 1.0;

  double x_at(double t) const {
    if (crossing) {
      double s = std::clamp(t / duration, 0.0, 1.0);
      s = s * s * (3.0 - 2.0 * s);
      return cross_from + (cross_to - cross_from) * s;
    }
    return x0 + ax * std::sin(kTwoPi * fx * t + px);
  }
  double z_at(double t) const { return z0 + az * std::sin(kTwoPi * fz * t + pz); }
};

// Neutral standing pose: arms hanging, legs straight.
PoseParams standing_pose() {
  PoseParams th = PoseParams::Zero();
  th[11] = -1.05;  // l_shoulder Z
  th[14] = 1.05;   // r_shoulder Z
  th[17] = -0.35;  // l_elbow
  th[18] = 0.35;   // r_elbow
  return th;
}

DofWave make_wave(Rng& rng, double lo, double hi, double standing_center, double activity) {
  DofWave w;
  const double range = hi - lo;
  const double margin = 0.12 * range;
  const double usable_lo = lo + margin;
  const double usable_hi = hi - margin;
  const double max_amp = activity * 0.5 * (usable_hi - usable_lo);
  w.a1 = rng.uniform(0.2, 1.0) * max_amp * 0.7;
  w.a2 = rng.uniform(0.2, 1.0) * max_amp * 0.3;
  const double slack_lo = usable_lo + (w.a1 + w.a2);
  const double slack_hi = usable_hi - (w.a1 + w.a2);
  const double c = std::clamp(standing_center, slack_lo, slack_hi);
  // Center drawn near the standing value so poses stay plausible.
  w.center = std::clamp(c + rng.uniform(-0.15, 0.15) * (slack_hi - slack_lo), slack_lo, slack_hi);
  w.f1 = rng.uniform(0.15, 0.55);
  w.f2 = rng.uniform(0.55, 1.1);
  w.p1 = rng.uniform(0.0, kTwoPi);
  w.p2 = rng.uniform(0.0, kTwoPi);
  return w;
}

// Capsule occluders: (joint, parent) bones plus two torso diagonals.
struct Capsule {
  int a, b;
  double radius;  // meters
};

const std::vector<Capsule>& occluder_capsules() {
  static const std::vector<Capsule> caps = {
      {kSpine, kPelvis, 0.13},    {kNeck, kSpine, 0.11},      {kHead, kNeck, 0.07},
      {kLShoulder, kNeck, 0.06},  {kRShoulder, kNeck, 0.06},  {kLElbow, kLShoulder, 0.045},
      {kRElbow, kRShoulder, 0.045}, {kLWrist, kLElbow, 0.04}, {kRWrist, kRElbow, 0.04},
      {kLHip, kPelvis, 0.09},     {kRHip, kPelvis, 0.09},     {kLKnee, kLHip, 0.07},
      {kRKnee, kRHip, 0.07},      {kLAnkle, kLKnee, 0.055},   {kRAnkle, kRKnee, 0.055},
      {kLFootTip, kLAnkle, 0.04}, {kRFootTip, kRAnkle, 0.04}, {kLShoulder, kLHip, 0.10},
      {kRShoulder, kRHip, 0.10},
  };
  return caps;
}

std::array<Vec3, kNumJoints> world_joints(const Skeleton& skel, const PersonTruth& p) {
  const Pose3d glob = skel.forward_kinematics_global(p.theta, p.bones);
  std::array<Vec3, kNumJoints> w;
  for (int j = 0; j < kNumJoints; ++j) w[static_cast<size_t>(j)] = p.height * glob[j];
  return w;
}

}  // namespace

std::vector<SceneFrame> generate_motion(int n_persons, int n_frames, uint64_t seed) {
  SceneConfig cfg;
  cfg.persons = n_persons;
  cfg.frames = n_frames;
  cfg.seed = seed;
  return generate_motion(cfg);
}

std::vector<SceneFrame> generate_motion(const SceneConfig& config) {
  if (config.persons < 1) throw std::invalid_argument("generate_motion: persons must be >= 1");
  if (config.image_width % 16 != 0 || config.image_height % 16 != 0) {
    throw std::invalid_argument("generate_motion: image dims must be divisible by 16");
  }
  const Skeleton& skel = Skeleton::standard();
  const JointLimits limits = JointLimits::standard();
  const PoseParams standing = standing_pose();
  const int n = config.persons;
  const double duration = config.frames / config.fps;

  const bool crossing = config.script == "crossing";
  const bool spread = config.script == "spread";
  const bool is_static = config.script == "static" || config.script == "jump";

  std::vector<PersonMotion> motions(static_cast<size_t>(n));
  std::vector<PersonTruth> bases(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    Rng rng(Rng::mix(config.seed, static_cast<uint64_t>(k), 0xA11CE));
    PersonMotion& m = motions[static_cast<size_t>(k)];
    m.duration = duration;

    const double lane_span = n > 1 ? 2.6 : 0.0;
    const double lane = n > 1 ? -lane_span / 2.0 + lane_span * k / (n - 1) : 0.0;
    m.x0 = lane;
    m.z0 = 3.6 + 0.7 * (k % 3);
    if (crossing && n == 2) {
      m.crossing = true;
      m.cross_from = k == 0 ? -1.2 : 1.2;
      m.cross_to = -m.cross_from;
      m.z0 = k == 0 ? 3.8 : 5.0;
    } else if (spread) {
      m.ax = rng.uniform(0.05, 0.18);
      m.az = rng.uniform(0.05, 0.25);
      m.fx = rng.uniform(0.05, 0.15);
      m.fz = rng.uniform(0.05, 0.15);
      m.px = rng.uniform(0.0, kTwoPi);
      m.pz = rng.uniform(0.0, kTwoPi);
    } else if (!is_static) {
      m.ax = rng.uniform(0.2, 0.55);
      m.az = rng.uniform(0.1, 0.5);
      m.fx = rng.uniform(0.04, 0.12);
      m.fz = rng.uniform(0.04, 0.10);
      m.px = rng.uniform(0.0, kTwoPi);
      m.pz = rng.uniform(0.0, kTwoPi);
    }
    m.jump = config.script == "jump" && k == 0;

    const double activity = is_static ? 0.10 : (spread ? 0.35 : 0.5);
    for (int d = 6; d < kNumDof; ++d) {
      m.waves[static_cast<size_t>(d)] = make_wave(rng, limits.lo[d], limits.hi[d], standing[d], activity);
    }
    // Root rotation: gentle lean, moderate yaw.
    m.waves[3] = DofWave{0.0, 0.05, 0.10, rng.uniform(0.0, kTwoPi), 0.0, 0.0, 0.0};
    m.waves[4] = DofWave{0.0, 0.05, 0.08, rng.uniform(0.0, kTwoPi), 0.0, 0.0, 0.0};
    m.waves[5] = DofWave{0.0, is_static ? 0.1 : 0.3, 0.06, rng.uniform(0.0, kTwoPi), 0.0, 0.0, 0.0};

    PersonTruth& base = bases[static_cast<size_t>(k)];
    base.id = k;
    Rng body_rng(Rng::mix(config.seed, static_cast<uint64_t>(k), 0xB0D1));
    base.height = body_rng.uniform(config.height_min, config.height_max);
    BoneLengths bones = skel.default_bones();
    // Mirror-symmetric +-3% proportion jitter, then renormalize to height 1.
    for (int j = 1; j < kNumJoints; ++j) {
      const std::string& nm = skel.joint(j).name;
      if (nm.size() > 2 && nm[0] == 'r' && nm[1] == '_') continue;
      const double s = 1.0 + 0.03 * body_rng.normal();
      bones[static_cast<size_t>(j)] *= std::max(0.8, s);
      if (nm.size() > 2 && nm[0] == 'l' && nm[1] == '_') {
        const int mirror = skel.joint_index("r" + nm.substr(1));
        if (mirror >= 0) bones[static_cast<size_t>(mirror)] = bones[static_cast<size_t>(j)];
      }
    }
    const double rest = skel.rest_height(bones);
    for (int j = 1; j < kNumJoints; ++j) bones[static_cast<size_t>(j)] /= rest;
    base.bones = bones;
    base.appearance_seed = Rng::mix(config.seed, static_cast<uint64_t>(k), 0xC0105);
    Rng app_rng(base.appearance_seed);
    base.hue = k < static_cast<int>(config.hues.size()) ? config.hues[static_cast<size_t>(k)]
                                                        : app_rng.uniform();
    base.sat = app_rng.uniform(0.45, 0.90);
  }

  const CameraModel cam =
      CameraModel::standard(config.image_width, config.image_height, config.focal);

  std::vector<SceneFrame> frames(static_cast<size_t>(config.frames));
  for (int f = 0; f < config.frames; ++f) {
    SceneFrame& frame = frames[static_cast<size_t>(f)];
    frame.index = f;
    frame.time = f / config.fps;
    frame.width = config.image_width;
    frame.height = config.image_height;
    frame.cam = cam;
    frame.persons = bases;

    // Angle deviations ramp in over the first half second so every sequence
    // starts from a clean standing pose (used by height calibration).
    const double envelope = std::min(1.0, frame.time / 0.5);

    for (int k = 0; k < n; ++k) {
      PersonTruth& p = frame.persons[static_cast<size_t>(k)];
      const PersonMotion& m = motions[static_cast<size_t>(k)];
      PoseParams theta = PoseParams::Zero();
      for (int d = 3; d < kNumDof; ++d) {
        const double raw = m.waves[static_cast<size_t>(d)].eval(frame.time);
        theta[d] = standing[d] + envelope * (raw - standing[d]);
      }
      // Feet on the ground: root height cancels the lowest foot joint.
      const Pose3d rel = skel.forward_kinematics(theta, p.bones);
      double min_y = 0.0;
      for (int j : {kLAnkle, kRAnkle, kLFootTip, kRFootTip}) min_y = std::min(min_y, rel[j].y());
      double hop_m = 0.0;
      if (m.jump && frame.time >= 1.0) {
        const double phase = std::fmod(frame.time - 1.0, 2.0);
        if (phase < 0.5) {
          const double u = phase / 0.5;
          hop_m = 4.0 * 0.25 * u * (1.0 - u);
        }
      }
      theta[0] = m.x_at(frame.time) / p.height;
      theta[1] = -min_y + hop_m / p.height;
      theta[2] = m.z_at(frame.time) / p.height;
      p.theta = theta;
      if (config.appearance_drift != 0.0) {
        p.hue = wrap01(p.hue + config.appearance_drift * frame.time);
      }
      for (const OcclusionWindow& w : config.occlusions) {
        if (w.person == k && f >= w.start && f < w.end) p.forced_occluded = true;
      }
    }
  }
  return frames;
}

std::vector<std::array<bool, kNumJoints>> compute_visibility(const Skeleton& skel,
                                                             const SceneFrame& frame,
                                                             const RenderParams& params) {
  const int n = static_cast<int>(frame.persons.size());
  std::vector<std::array<Vec3, kNumJoints>> world(static_cast<size_t>(n));
  std::vector<std::array<std::optional<Projected>, kNumJoints>> proj(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    world[static_cast<size_t>(k)] = world_joints(skel, frame.persons[static_cast<size_t>(k)]);
    for (int j = 0; j < kNumJoints; ++j) {
      proj[static_cast<size_t>(k)][static_cast<size_t>(j)] =
          frame.cam.project(world[static_cast<size_t>(k)][static_cast<size_t>(j)]);
    }
  }

  std::vector<std::array<bool, kNumJoints>> vis(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    auto& v = vis[static_cast<size_t>(k)];
    if (frame.persons[static_cast<size_t>(k)].forced_occluded) {
      v.fill(false);
      continue;
    }
    for (int j = 0; j < kNumJoints; ++j) {
      const auto& pj = proj[static_cast<size_t>(k)][static_cast<size_t>(j)];
      bool ok = pj.has_value() && pj->uv.x() >= 0.0 && pj->uv.y() >= 0.0 &&
                pj->uv.x() <= frame.width - 1.0 && pj->uv.y() <= frame.height - 1.0;
      if (ok) {
        const Vec2 p = pj->uv;
        const double depth = pj->depth;
        for (int b = 0; b < n && ok; ++b) {
          if (b == k) continue;
          for (const Capsule& c : occluder_capsules()) {
            const auto& q1 = proj[static_cast<size_t>(b)][static_cast<size_t>(c.a)];
            const auto& q2 = proj[static_cast<size_t>(b)][static_cast<size_t>(c.b)];
            if (!q1 || !q2) continue;
            const Vec2 d = q2->uv - q1->uv;
            const double len2 = d.squaredNorm();
            const double t = len2 > 1e-12 ? std::clamp((p - q1->uv).dot(d) / len2, 0.0, 1.0) : 0.0;
            const Vec2 closest = q1->uv + t * d;
            const double zc = q1->depth + t * (q2->depth - q1->depth);
            const double r_px = frame.cam.fx * c.radius / zc;
            if ((p - closest).norm() <= r_px && zc < depth - params.occlusion_margin) {
              ok = false;
              break;
            }
          }
        }
      }
      v[static_cast<size_t>(j)] = ok;
    }
  }
  return vis;
}

void render_stage1(const Skeleton& skel, const SceneFrame& frame, const RenderParams& params,
                   const NoiseSpec& noise, StageOneMaps* maps, RenderInfo* info) {
  const int stride = 8;
  const int mw = frame.width / stride;
  const int mh = frame.height / stride;
  maps->reset(mw, mh);
  maps->stride = stride;

  const int n = static_cast<int>(frame.persons.size());
  RenderInfo local;
  RenderInfo& out = info ? *info : local;
  out.visible = compute_visibility(skel, frame, params);
  out.gt2d.assign(static_cast<size_t>(n), Pose2d{});
  out.gt3d_m.resize(static_cast<size_t>(n));
  out.root_world.resize(static_cast<size_t>(n));

  // Nearest-writer-wins scratch for the encoding maps.
  std::array<MapGrid, kNumJoints> owner_dist;
  for (auto& g : owner_dist) g.setConstant(mh, mw, 1e18);
  std::array<Eigen::MatrixXi, kNumJoints> paf_count;
  for (auto& g : paf_count) g.setZero(mh, mw);

  for (int k = 0; k < n; ++k) {
    const PersonTruth& person = frame.persons[static_cast<size_t>(k)];
    const auto world = world_joints(skel, person);
    const Pose3d rel = skel.forward_kinematics(person.theta, person.bones);
    Pose3d rel_m;
    for (int j = 0; j < kNumJoints; ++j) rel_m[j] = person.height * rel[j];
    out.gt3d_m[static_cast<size_t>(k)] = rel_m;
    out.root_world[static_cast<size_t>(k)] = person.height * person.theta.head<3>();

    Pose2d& p2d = out.gt2d[static_cast<size_t>(k)];
    std::array<Vec2, kNumJoints> map_pos;
    for (int j = 0; j < kNumJoints; ++j) {
      const auto pr = frame.cam.project(world[static_cast<size_t>(j)]);
      const bool vis = out.visible[static_cast<size_t>(k)][static_cast<size_t>(j)];
      if (pr) {
        p2d.px[static_cast<size_t>(j)] = pr->uv;
        map_pos[static_cast<size_t>(j)] = pr->uv / stride;
      } else {
        map_pos[static_cast<size_t>(j)] = Vec2(-1e9, -1e9);
      }
      p2d.visible[static_cast<size_t>(j)] = vis;
    }

    const auto enc_vecs = encode(skel, rel_m, params.channel_dense);

    for (int j = 0; j < kNumJoints; ++j) {
      if (!p2d.visible[static_cast<size_t>(j)]) continue;
      const Vec2 c = map_pos[static_cast<size_t>(j)];
      const auto sj = static_cast<size_t>(j);

      // Heatmap blob (max-combined across subjects).
      const double sig = params.heat_sigma;
      const int r_heat = static_cast<int>(std::ceil(3.0 * sig));
      const int u0 = std::max(0, static_cast<int>(std::floor(c.x())) - r_heat);
      const int u1 = std::min(mw - 1, static_cast<int>(std::ceil(c.x())) + r_heat);
      const int v0 = std::max(0, static_cast<int>(std::floor(c.y())) - r_heat);
      const int v1 = std::min(mh - 1, static_cast<int>(std::ceil(c.y())) + r_heat);
      for (int v = v0; v <= v1; ++v) {
        for (int u = u0; u <= u1; ++u) {
          const double d2 = (u - c.x()) * (u - c.x()) + (v - c.y()) * (v - c.y());
          const double val = std::exp(-d2 / (2.0 * sig * sig));
          if (val > maps->heat[sj](v, u)) maps->heat[sj](v, u) = val;
        }
      }

      // Encoding vector around the joint cell, nearest subject wins.
      const int r_enc = static_cast<int>(std::ceil(params.enc_radius));
      const int eu0 = std::max(0, static_cast<int>(std::floor(c.x())) - r_enc);
      const int eu1 = std::min(mw - 1, static_cast<int>(std::ceil(c.x())) + r_enc);
      const int ev0 = std::max(0, static_cast<int>(std::floor(c.y())) - r_enc);
      const int ev1 = std::min(mh - 1, static_cast<int>(std::ceil(c.y())) + r_enc);
      for (int v = ev0; v <= ev1; ++v) {
        for (int u = eu0; u <= eu1; ++u) {
          const double d2 = (u - c.x()) * (u - c.x()) + (v - c.y()) * (v - c.y());
          if (d2 > params.enc_radius * params.enc_radius) continue;
          if (d2 >= owner_dist[sj](v, u)) continue;
          owner_dist[sj](v, u) = d2;
          maps->enc[sj].row(maps->cell_index(u, v)) = enc_vecs[sj].transpose();
        }
      }
    }

    // PAF bands, child -> parent, both endpoints visible.
    for (int j = 1; j < kNumJoints; ++j) {
      const int par = skel.parent(j);
      if (!p2d.visible[static_cast<size_t>(j)] || !p2d.visible[static_cast<size_t>(par)]) continue;
      const auto sj = static_cast<size_t>(j);
      const Vec2 a = map_pos[static_cast<size_t>(j)];
      const Vec2 b = map_pos[static_cast<size_t>(par)];
      const Vec2 d = b - a;
      const double len = d.norm();
      if (len < 1e-6) continue;
      const Vec2 dir = d / len;
      const double hw = params.paf_halfwidth;
      // One cell of lengthwise slack so bilinear samples at the endpoints
      // stay inside the written band (corner neighbors reach sqrt(2) cells out).
      const double ext = 1.5;
      const int u0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - hw - ext)));
      const int u1 = std::min(mw - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + hw + ext)));
      const int v0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - hw - ext)));
      const int v1 = std::min(mh - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + hw + ext)));
      for (int v = v0; v <= v1; ++v) {
        for (int u = u0; u <= u1; ++u) {
          const Vec2 s(u - a.x(), v - a.y());
          const double along = s.dot(dir);
          if (along < -ext || along > len + ext) continue;
          const double perp = std::abs(s.x() * dir.y() - s.y() * dir.x());
          if (perp > hw) continue;
          maps->paf_x[sj](v, u) += dir.x();
          maps->paf_y[sj](v, u) += dir.y();
          paf_count[sj](v, u) += 1;
        }
      }
    }
  }

  for (int j = 0; j < kNumJoints; ++j) {
    const auto sj = static_cast<size_t>(j);
    for (int v = 0; v < mh; ++v) {
      for (int u = 0; u < mw; ++u) {
        const int c = paf_count[sj](v, u);
        if (c > 1) {
          maps->paf_x[sj](v, u) /= c;
          maps->paf_y[sj](v, u) /= c;
        }
      }
    }
  }

  if (noise.sigma_heat > 0.0 || noise.sigma_paf > 0.0 || noise.sigma_enc > 0.0) {
    Rng rng(Rng::mix(noise.seed, static_cast<uint64_t>(frame.index), 0x4E0155));
    for (int j = 0; j < kNumJoints; ++j) {
      const auto sj = static_cast<size_t>(j);
      if (noise.sigma_heat > 0.0) {
        for (int v = 0; v < mh; ++v)
          for (int u = 0; u < mw; ++u)
            maps->heat[sj](v, u) =
                std::clamp(maps->heat[sj](v, u) + rng.normal(0.0, noise.sigma_heat), 0.0, 1.0);
      }
      if (noise.sigma_paf > 0.0) {
        for (int v = 0; v < mh; ++v)
          for (int u = 0; u < mw; ++u) {
            maps->paf_x[sj](v, u) += rng.normal(0.0, noise.sigma_paf);
            maps->paf_y[sj](v, u) += rng.normal(0.0, noise.sigma_paf);
          }
      }
      if (noise.sigma_enc > 0.0) {
        // Only cells that carry an encoding are perturbed; unsupervised
        // background cells are never read downstream.
        for (int v = 0; v < mh; ++v)
          for (int u = 0; u < mw; ++u) {
            if (owner_dist[sj](v, u) >= 1e18) continue;
            auto row = maps->enc[sj].row(maps->cell_index(u, v));
            for (int c = 0; c < row.cols(); ++c) row(c) += rng.normal(0.0, noise.sigma_enc);
          }
      }
    }
  }
}

void render_appearance(const Skeleton& skel, const SceneFrame& frame, HsImage* img) {
  img->reset(frame.width, frame.height);
  Rng bg(Rng::mix(0xBAC6, static_cast<uint64_t>(frame.index)));
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      img->hue(y, x) = static_cast<float>(bg.uniform());
      img->sat(y, x) = static_cast<float>(bg.uniform(0.0, 0.25));
    }
  }

  // Far to near so closer subjects overwrite.
  std::vector<int> order(frame.persons.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return frame.persons[static_cast<size_t>(a)].theta[2] > frame.persons[static_cast<size_t>(b)].theta[2];
  });

  for (int k : order) {
    const PersonTruth& p = frame.persons[static_cast<size_t>(k)];
    if (p.forced_occluded) continue;
    const auto world = world_joints(skel, p);
    std::array<Vec2, 4> quad;
    const int corners[4] = {kLShoulder, kRShoulder, kRHip, kLHip};
    Vec2 centroid = Vec2::Zero();
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
      const auto pr = frame.cam.project(world[static_cast<size_t>(corners[i])]);
      if (!pr) {
        ok = false;
        break;
      }
      quad[static_cast<size_t>(i)] = pr->uv;
      centroid += pr->uv / 4.0;
    }
    if (!ok) continue;
    for (auto& q : quad) q = centroid + 1.25 * (q - centroid);

    double lo_x = 1e18, hi_x = -1e18, lo_y = 1e18, hi_y = -1e18;
    for (const auto& q : quad) {
      lo_x = std::min(lo_x, q.x());
      hi_x = std::max(hi_x, q.x());
      lo_y = std::min(lo_y, q.y());
      hi_y = std::max(hi_y, q.y());
    }
    const PixelBox box = PixelBox{static_cast<int>(lo_x), static_cast<int>(lo_y),
                                  static_cast<int>(hi_x) + 1, static_cast<int>(hi_y) + 1}
                             .clipped(frame.width, frame.height);
    if (box.empty()) continue;

    Rng rng(Rng::mix(p.appearance_seed, static_cast<uint64_t>(frame.index), 0x70F50));
    auto inside = [&quad](double x, double y) {
      // Convex quad in l_sho, r_sho, r_hip, l_hip order; consistent sign of
      // edge cross products means inside.
      double sign = 0.0;
      for (int i = 0; i < 4; ++i) {
        const Vec2& a = quad[static_cast<size_t>(i)];
        const Vec2& b = quad[static_cast<size_t>((i + 1) % 4)];
        const double cr = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
        if (std::abs(cr) < 1e-12) continue;
        if (sign == 0.0) {
          sign = cr > 0 ? 1.0 : -1.0;
        } else if ((cr > 0 ? 1.0 : -1.0) != sign) {
          return false;
        }
      }
      return true;
    };
    for (int y = box.y0; y < box.y1; ++y) {
      for (int x = box.x0; x < box.x1; ++x) {
        if (!inside(x + 0.5, y + 0.5)) continue;
        img->hue(y, x) = static_cast<float>(wrap01(p.hue + 0.02 * rng.normal()));
        img->sat(y, x) = static_cast<float>(std::clamp(p.sat + 0.05 * rng.normal(), 0.0, 1.0));
      }
    }
  }
}

void write_scene_jsonl(const std::string& path, const Skeleton& skel,
                       const std::vector<SceneFrame>& frames, const RenderParams& params) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const SceneFrame& frame : frames) {
    const auto vis = compute_visibility(skel, frame, params);
    nlohmann::json line;
    line["schema"] = 1;
    line["frame"] = frame.index;
    line["time"] = frame.time;
    line["image"] = {{"w", frame.width}, {"h", frame.height}};
    nlohmann::json persons = nlohmann::json::array();
    for (size_t k = 0; k < frame.persons.size(); ++k) {
      const PersonTruth& p = frame.persons[k];
      nlohmann::json e;
      e["id"] = p.id;
      e["height"] = p.height;
      e["hue"] = p.hue;
      e["theta"] = std::vector<double>(p.theta.data(), p.theta.data() + kNumDof);
      e["bones"] = std::vector<double>(p.bones.begin(), p.bones.end());
      const Pose3d rel = skel.forward_kinematics(p.theta, p.bones);
      nlohmann::json p3d = nlohmann::json::array();
      for (int j = 0; j < kNumJoints; ++j) {
        p3d.push_back({p.height * rel[j].x(), p.height * rel[j].y(), p.height * rel[j].z()});
      }
      e["p3d_m"] = p3d;
      const Vec3 root = p.height * p.theta.head<3>();
      e["root_world_m"] = {root.x(), root.y(), root.z()};
      nlohmann::json p2d = nlohmann::json::array();
      const auto world = world_joints(skel, p);
      for (int j = 0; j < kNumJoints; ++j) {
        const auto pr = frame.cam.project(world[static_cast<size_t>(j)]);
        p2d.push_back({pr ? pr->uv.x() : -1.0, pr ? pr->uv.y() : -1.0});
      }
      e["p2d_px"] = p2d;
      e["visible"] = vis[k];
      persons.push_back(e);
    }
    line["persons"] = persons;
    os << line.dump() << "\n";
  }
}

}  // namespace mocap
