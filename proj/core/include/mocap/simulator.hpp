#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mocap/appearance.hpp"
#include "mocap/camera.hpp"
#include "mocap/maps.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

struct PersonTruth {
  int id = 0;
  PoseParams theta;     // root translation in unit-height coordinates
  BoneLengths bones;    // unit skeleton height
  double height = 1.7;  // meters
  uint64_t appearance_seed = 0;
  double hue = 0.0;  // torso color center, [0,1)
  double sat = 0.7;
  bool forced_occluded = false;  // scripted full occlusion this frame
};

struct SceneFrame {
  int index = 0;
  double time = 0.0;  // seconds
  int width = 512, height = 320;
  CameraModel cam;
  std::vector<PersonTruth> persons;
};

struct OcclusionWindow {
  int person = 0;
  int start = 0;  // inclusive
  int end = 0;    // exclusive
};

struct SceneConfig {
  int persons = 2;
  int frames = 100;
  uint64_t seed = 1;
  double fps = 30.0;
  // "weave" free smooth motion, "spread" guaranteed non-overlapping lanes,
  // "crossing" two subjects trading places, "static" standing, "jump"
  // person 0 hops.
  std::string script = "weave";
  int image_width = 512;
  int image_height = 320;
  double focal = 400.0;
  double height_min = 1.55;
  double height_max = 1.90;
  double appearance_drift = 0.0;  // hue shift per second
  std::vector<OcclusionWindow> occlusions;
  std::vector<double> hues;  // optional explicit torso hues per person
};

// Deterministic smooth multi-person motion. Angle channels are sums of
// low-frequency sinusoids kept inside the joint limits; the root is placed so
// feet stay on the ground plane (plus hop offsets for the jump script).
std::vector<SceneFrame> generate_motion(const SceneConfig& config);

// Convenience overload matching the (n_persons, n_frames, seed) contract.
std::vector<SceneFrame> generate_motion(int n_persons, int n_frames, uint64_t seed);

struct NoiseSpec {
  double sigma_heat = 0.0;
  double sigma_paf = 0.0;
  double sigma_enc = 0.0;
  uint64_t seed = 0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec uniform(double sigma, uint64_t seed) { return {sigma, sigma, sigma, seed}; }
};

struct RenderParams {
  double heat_sigma = 2.0;      // map cells
  double paf_halfwidth = 2.0;   // band half-width, map cells (width 4)
  double enc_radius = 2.0;      // cells around a joint carrying its encoding
  double occlusion_margin = 0.05;  // meters of depth separation required
  bool channel_dense = false;   // ablation: dense supervision of L
};

// Ground-truth quantities alongside the rendered maps.
struct RenderInfo {
  std::vector<std::array<bool, kNumJoints>> visible;  // per person-joint
  std::vector<Pose2d> gt2d;                           // absolute pixels
  std::vector<Pose3d> gt3d_m;                         // root-relative, meters
  std::vector<Vec3> root_world;                       // meters
};

// Per person-joint visibility: inside the image, not forced occluded, and not
// covered by a closer subject's limb capsule (painter's depth ordering).
std::vector<std::array<bool, kNumJoints>> compute_visibility(const Skeleton& skel,
                                                             const SceneFrame& frame,
                                                             const RenderParams& params);

// Synthesizes the Stage I outputs for one frame: Gaussian heatmap blobs, PAF
// bands toward each joint's kinematic parent, channel-sparse encoding maps,
// then additive Gaussian noise. Occluded joints contribute to none of them.
void render_stage1(const Skeleton& skel, const SceneFrame& frame, const RenderParams& params,
                   const NoiseSpec& noise, StageOneMaps* maps, RenderInfo* info);

// Hue/saturation frame at pixel resolution: noisy background plus each
// subject's torso quad filled from their color distribution, far-to-near.
void render_appearance(const Skeleton& skel, const SceneFrame& frame, HsImage* img);

// One frame per line; schema-versioned ground truth for eval and tests.
void write_scene_jsonl(const std::string& path, const Skeleton& skel,
                       const std::vector<SceneFrame>& frames, const RenderParams& params);

}  // namespace mocap
