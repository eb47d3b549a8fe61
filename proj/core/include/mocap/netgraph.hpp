#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mocap::net {

enum class LayerKind {
  kInput,
  kConv,     // kernel x kernel, optional groups, same padding
  kNormAct,  // batch norm + nonlinearity, fused
  kConcat,
  kAdd,
  kMaxPool,        // 3x3 stride 2, same padding
  kGlobalAvgPool,  // spatial mean
  kFc,
};

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::kInput;
  std::vector<int> inputs;  // indices of producer layers
  int kernel = 0;
  int stride = 1;
  int groups = 1;
  int out_ch = 0;  // for conv/fc; derived for the rest
};

// Layer-level DAG for analytic accounting and toy forward execution. Layers
// are stored in topological (execution) order.
struct NetGraph {
  std::string name;
  std::vector<Layer> layers;
  int input_channels = 3;

  int add_layer(Layer layer);
};

enum class SkipKind { kConcat, kAdd };
enum class SkipSource { kFirst, kPrev, kDense };
enum class WidthScheme { kWide, kBase };

struct SelecSlsOptions {
  SkipKind skip = SkipKind::kConcat;
  SkipSource source = SkipSource::kFirst;
  WidthScheme widths = WidthScheme::kWide;
};

// Core network: L0 3x3/2 conv to 32ch, then SelecSLS modules
// L1 (k=64: 64, 128), L2 (k=128: 128, 128, 288), L3 (k=288: 288, 288, 288,
// 416). Each module interleaves three 3x3 convolutions with 1x1 convolutions,
// concatenates the 2k features from the 3x3 outputs (plus the cross-module
// skip), and reduces with a final 1x1. 3x3 convolutions with more than 96
// outputs use 2 groups, more than 192 outputs 4 groups. Stride-2 modules take
// no cross-module skip; others read the first module of their level.
NetGraph build_selecsls(const SelecSlsOptions& options = {});

// Standard ResNet-50/34 (ImageNet heads included) as accounting baselines.
NetGraph build_resnet50();
NetGraph build_resnet34();

struct ParamCount {
  std::vector<int64_t> per_layer;
  int64_t conv = 0;  // conv + fc weights (no conv bias under norm, fc keeps bias)
  int64_t norm = 0;  // scale + shift per normalized channel
  int64_t total = 0;
};

ParamCount count_params(const NetGraph& g);

struct FlopCount {
  std::vector<int64_t> per_layer;
  int64_t total = 0;  // multiply-add counted as 2 FLOPs
};

FlopCount count_flops(const NetGraph& g, int width, int height);

struct LayerShape {
  int channels = 0;
  int width = 0;
  int height = 0;
};

// Spatial/channel shape per layer; throws on any inconsistent edge, naming it.
std::vector<LayerShape> infer_shapes(const NetGraph& g, int width, int height);

// Activation accounting, float32 elements, linear in batch.
// - forward_peak: peak of live tensors, a tensor living from its production
//   until its last consumer under the execution order.
// - forward_sum: every produced tensor (input included).
// - backward: forward_sum activations retained plus equally sized gradient
//   buffers (2x forward_sum).
struct ActivationMemory {
  int64_t forward_peak_bytes = 0;
  int64_t forward_sum_bytes = 0;
  int64_t backward_bytes = 0;
};

ActivationMemory activation_memory(const NetGraph& g, int batch, int width, int height);

// Whole-process residency model used for cross-architecture comparisons:
// a fixed runtime reserve (context, workspaces) plus weights, weight
// gradients, and the batch-scaled backward activation footprint.
constexpr int64_t kRuntimeReserveBytes = int64_t(1) << 30;  // 1 GiB

int64_t training_footprint_bytes(const NetGraph& g, int batch, int width, int height);

// Naive forward execution with seeded random weights at toy sizes; validates
// every edge's declared dims and returns a deterministic output checksum.
struct ForwardCheck {
  std::vector<LayerShape> shapes;
  double checksum = 0.0;  // sum of final layer activations
};

ForwardCheck forward_shapes(const NetGraph& g, int width, int height, uint64_t seed);

}  // namespace mocap::net
