#pragma once

#include <stdexcept>
#include <string>

#include "mocap/association.hpp"
#include "mocap/decoder.hpp"
#include "mocap/fitting.hpp"
#include "mocap/metrics.hpp"
#include "mocap/one_euro.hpp"
#include "mocap/simulator.hpp"
#include "mocap/tracking.hpp"

namespace mocap {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecoderRunConfig {
  int samples = 50000;
  TrainConfig train;
  bool ablate_encoding = false;
};

struct FittingRunConfig {
  FitParams fit;
  EnergyWeights weights;
  OneEuroParams one_euro;
  bool enable_filter = true;
  bool enable_temporal = true;
  double recovery_tau = RecoveryMonitor::kDefaultTau;
};

struct BenchConfig {
  int frames = 60;
  int max_persons = 10;
};

// Whole-run configuration. Loading is schema-validated: an unknown key
// anywhere rejects the file with ConfigError before any work happens.
struct RunConfig {
  SceneConfig scene;
  NoiseSpec noise;
  RenderParams render;
  AssocParams assoc;
  DecoderRunConfig decoder;
  FittingRunConfig fitting;
  TrackerParams tracker;
  MetricParams eval;
  BenchConfig bench;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);
std::string config_to_json(const RunConfig& config);  // fully populated, for --help/docs

}  // namespace mocap
