#include "mocap/netgraph.hpp"

#include <cmath>
#include <stdexcept>

#include "mocap/rng.hpp"

namespace mocap::net {

int NetGraph::add_layer(Layer layer) {
  for (int i : layer.inputs) {
    if (i < 0 || i >= static_cast<int>(layers.size())) {
      throw std::invalid_argument("netgraph: layer '" + layer.name + "' references missing input");
    }
  }
  layers.push_back(std::move(layer));
  return static_cast<int>(layers.size()) - 1;
}

namespace {

int conv_groups_3x3(int out_ch) {
  if (out_ch > 192) return 4;
  if (out_ch > 96) return 2;
  return 1;
}

// conv (+ norm/ReLU) pair; returns the norm_act index.
int conv_bn(NetGraph& g, const std::string& name, int input, int kernel, int stride, int out_ch,
            bool grouped) {
  Layer conv;
  conv.name = name;
  conv.kind = LayerKind::kConv;
  conv.inputs = {input};
  conv.kernel = kernel;
  conv.stride = stride;
  conv.groups = grouped && kernel == 3 ? conv_groups_3x3(out_ch) : 1;
  conv.out_ch = out_ch;
  const int c = g.add_layer(conv);

  Layer na;
  na.name = name + ".bn";
  na.kind = LayerKind::kNormAct;
  na.inputs = {c};
  return g.add_layer(na);
}

struct ModuleResult {
  int output;
};

// SelecSLS module: three 3x3 convolutions (k, k/2, k/2 features) interleaved
// with 1x1 convolutions, their 2k outputs concatenated together with the
// cross-module skip, then a 1x1 producing n_o.
ModuleResult selecsls_module(NetGraph& g, const std::string& name, int input, int skip, int k,
                             int n_o, int stride, SkipKind skip_kind) {
  const int d1 = conv_bn(g, name + ".conv1", input, 3, stride, k, true);
  const int p1 = conv_bn(g, name + ".conv2", d1, 1, 1, k, false);
  const int d2 = conv_bn(g, name + ".conv3", p1, 3, 1, k / 2, true);
  const int p2 = conv_bn(g, name + ".conv4", d2, 1, 1, k, false);
  const int d3 = conv_bn(g, name + ".conv5", p2, 3, 1, k / 2, true);

  Layer cat;
  cat.name = name + ".concat";
  cat.kind = LayerKind::kConcat;
  cat.inputs = {d1, d2, d3};
  if (skip >= 0 && skip_kind == SkipKind::kConcat) cat.inputs.push_back(skip);
  const int c = g.add_layer(cat);

  int out = conv_bn(g, name + ".conv6", c, 1, 1, n_o, false);
  if (skip >= 0 && skip_kind == SkipKind::kAdd) {
    Layer add;
    add.name = name + ".add";
    add.kind = LayerKind::kAdd;
    add.inputs = {out, skip};
    out = g.add_layer(add);
  }
  return {out};
}

}  // namespace

NetGraph build_selecsls(const SelecSlsOptions& options) {
  NetGraph g;
  g.name = "selecsls";
  Layer in;
  in.name = "input";
  in.kind = LayerKind::kInput;
  const int input = g.add_layer(in);

  const int l0 = conv_bn(g, "L0.conv", input, 3, 2, 32, true);

  struct LevelSpec {
    int k;
    std::vector<int> wide;  // n_o per module, Table 2
  };
  const std::vector<LevelSpec> levels = {
      {64, {64, 128}},
      {128, {128, 128, 288}},
      {288, {288, 288, 288, 416}},
  };

  int prev = l0;
  for (size_t li = 0; li < levels.size(); ++li) {
    const LevelSpec& level = levels[li];
    std::vector<int> outputs;  // module outputs within this level
    for (size_t mi = 0; mi < level.wide.size(); ++mi) {
      const int n_o = options.widths == WidthScheme::kWide ? level.wide[mi] : level.k;
      const int stride = mi == 0 ? 2 : 1;
      int skip = -1;
      if (stride == 1) {
        skip = options.source == SkipSource::kPrev ? prev : outputs.front();
      }
      const std::string name = "L" + std::to_string(li + 1) + ".M" + std::to_string(mi);
      if (options.source == SkipSource::kDense && stride == 1) {
        // Dense-connectivity baseline: concatenate every earlier module output
        // of the level.
        const int d1 = conv_bn(g, name + ".conv1", prev, 3, stride, level.k, true);
        const int p1 = conv_bn(g, name + ".conv2", d1, 1, 1, level.k, false);
        const int d2 = conv_bn(g, name + ".conv3", p1, 3, 1, level.k / 2, true);
        const int p2 = conv_bn(g, name + ".conv4", d2, 1, 1, level.k, false);
        const int d3 = conv_bn(g, name + ".conv5", p2, 3, 1, level.k / 2, true);
        Layer cat;
        cat.name = name + ".concat";
        cat.kind = LayerKind::kConcat;
        cat.inputs = {d1, d2, d3};
        for (int o : outputs) cat.inputs.push_back(o);
        const int c = g.add_layer(cat);
        prev = conv_bn(g, name + ".conv6", c, 1, 1, n_o, false);
      } else {
        prev = selecsls_module(g, name, prev, skip, level.k, n_o, stride, options.skip).output;
      }
      outputs.push_back(prev);
    }
  }
  return g;
}

namespace {

int resnet_bottleneck(NetGraph& g, const std::string& name, int input, int in_ch, int mid,
                      int out_ch, int stride) {
  const int c1 = conv_bn(g, name + ".conv1", input, 1, 1, mid, false);
  const int c2 = conv_bn(g, name + ".conv2", c1, 3, stride, mid, false);
  const int c3 = conv_bn(g, name + ".conv3", c2, 1, 1, out_ch, false);
  int identity = input;
  if (stride != 1 || in_ch != out_ch) {
    identity = conv_bn(g, name + ".downsample", input, 1, stride, out_ch, false);
  }
  Layer add;
  add.name = name + ".add";
  add.kind = LayerKind::kAdd;
  add.inputs = {c3, identity};
  return g.add_layer(add);
}

int resnet_basic(NetGraph& g, const std::string& name, int input, int in_ch, int out_ch,
                 int stride) {
  const int c1 = conv_bn(g, name + ".conv1", input, 3, stride, out_ch, false);
  const int c2 = conv_bn(g, name + ".conv2", c1, 3, 1, out_ch, false);
  int identity = input;
  if (stride != 1 || in_ch != out_ch) {
    identity = conv_bn(g, name + ".downsample", input, 1, stride, out_ch, false);
  }
  Layer add;
  add.name = name + ".add";
  add.kind = LayerKind::kAdd;
  add.inputs = {c2, identity};
  return g.add_layer(add);
}

NetGraph resnet_common(const std::string& name, bool bottleneck, const std::vector<int>& blocks) {
  NetGraph g;
  g.name = name;
  Layer in;
  in.name = "input";
  in.kind = LayerKind::kInput;
  const int input = g.add_layer(in);

  int x = conv_bn(g, "c1.conv", input, 7, 2, 64, false);
  Layer pool;
  pool.name = "c1.maxpool";
  pool.kind = LayerKind::kMaxPool;
  pool.inputs = {x};
  pool.kernel = 3;
  pool.stride = 2;
  x = g.add_layer(pool);

  const int mids[4] = {64, 128, 256, 512};
  int in_ch = 64;
  for (int level = 0; level < 4; ++level) {
    const int out_ch = bottleneck ? mids[level] * 4 : mids[level];
    for (int b = 0; b < blocks[static_cast<size_t>(level)]; ++b) {
      const int stride = (level > 0 && b == 0) ? 2 : 1;
      const std::string bname = "c" + std::to_string(level + 2) + ".B" + std::to_string(b);
      x = bottleneck ? resnet_bottleneck(g, bname, x, in_ch, mids[level], out_ch, stride)
                     : resnet_basic(g, bname, x, in_ch, out_ch, stride);
      in_ch = out_ch;
    }
  }

  Layer gap;
  gap.name = "head.avgpool";
  gap.kind = LayerKind::kGlobalAvgPool;
  gap.inputs = {x};
  x = g.add_layer(gap);
  Layer fc;
  fc.name = "head.fc";
  fc.kind = LayerKind::kFc;
  fc.inputs = {x};
  fc.out_ch = 1000;
  g.add_layer(fc);
  return g;
}

}  // namespace

NetGraph build_resnet50() { return resnet_common("resnet50", true, {3, 4, 6, 3}); }
NetGraph build_resnet34() { return resnet_common("resnet34", false, {3, 4, 6, 3}); }

std::vector<LayerShape> infer_shapes(const NetGraph& g, int width, int height) {
  std::vector<LayerShape> shapes(g.layers.size());
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& layer = g.layers[i];
    LayerShape s;
    switch (layer.kind) {
      case LayerKind::kInput:
        s = {g.input_channels, width, height};
        break;
      case LayerKind::kConv: {
        const LayerShape& in = shapes[static_cast<size_t>(layer.inputs.at(0))];
        if (in.channels % layer.groups != 0) {
          throw std::runtime_error("netgraph: '" + layer.name + "' input channels " +
                                   std::to_string(in.channels) + " not divisible by groups");
        }
        s.channels = layer.out_ch;
        s.width = (in.width - 1) / layer.stride + 1;
        s.height = (in.height - 1) / layer.stride + 1;
        break;
      }
      case LayerKind::kNormAct: {
        s = shapes[static_cast<size_t>(layer.inputs.at(0))];
        break;
      }
      case LayerKind::kConcat: {
        const LayerShape& first = shapes[static_cast<size_t>(layer.inputs.at(0))];
        s = first;
        s.channels = 0;
        for (int idx : layer.inputs) {
          const LayerShape& in = shapes[static_cast<size_t>(idx)];
          if (in.width != first.width || in.height != first.height) {
            throw std::runtime_error("netgraph: concat '" + layer.name +
                                     "' spatial mismatch on input '" +
                                     g.layers[static_cast<size_t>(idx)].name + "'");
          }
          s.channels += in.channels;
        }
        break;
      }
      case LayerKind::kAdd: {
        const LayerShape& first = shapes[static_cast<size_t>(layer.inputs.at(0))];
        for (int idx : layer.inputs) {
          const LayerShape& in = shapes[static_cast<size_t>(idx)];
          if (in.channels != first.channels || in.width != first.width ||
              in.height != first.height) {
            throw std::runtime_error("netgraph: add '" + layer.name + "' shape mismatch on '" +
                                     g.layers[static_cast<size_t>(idx)].name + "'");
          }
        }
        s = first;
        break;
      }
      case LayerKind::kMaxPool: {
        const LayerShape& in = shapes[static_cast<size_t>(layer.inputs.at(0))];
        s.channels = in.channels;
        s.width = (in.width - 1) / layer.stride + 1;
        s.height = (in.height - 1) / layer.stride + 1;
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        const LayerShape& in = shapes[static_cast<size_t>(layer.inputs.at(0))];
        s = {in.channels, 1, 1};
        break;
      }
      case LayerKind::kFc: {
        s = {layer.out_ch, 1, 1};
        break;
      }
    }
    shapes[i] = s;
  }
  return shapes;
}

ParamCount count_params(const NetGraph& g) {
  // Channel inference is spatial-free; use a nominal size.
  const auto shapes = infer_shapes(g, 1 << 10, 1 << 10);
  ParamCount out;
  out.per_layer.resize(g.layers.size(), 0);
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& layer = g.layers[i];
    int64_t p = 0;
    if (layer.kind == LayerKind::kConv) {
      const int in_ch = shapes[static_cast<size_t>(layer.inputs[0])].channels;
      p = int64_t(layer.kernel) * layer.kernel * (in_ch / layer.groups) * layer.out_ch;
      out.conv += p;
    } else if (layer.kind == LayerKind::kNormAct) {
      p = 2 * int64_t(shapes[i].channels);
      out.norm += p;
    } else if (layer.kind == LayerKind::kFc) {
      const int in_ch = shapes[static_cast<size_t>(layer.inputs[0])].channels;
      p = int64_t(in_ch) * layer.out_ch + layer.out_ch;
      out.conv += p;
    }
    out.per_layer[i] = p;
  }
  out.total = out.conv + out.norm;
  return out;
}

FlopCount count_flops(const NetGraph& g, int width, int height) {
  const auto shapes = infer_shapes(g, width, height);
  FlopCount out;
  out.per_layer.resize(g.layers.size(), 0);
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& layer = g.layers[i];
    const LayerShape& s = shapes[i];
    const int64_t elems = int64_t(s.channels) * s.width * s.height;
    int64_t f = 0;
    switch (layer.kind) {
      case LayerKind::kConv: {
        const int in_ch = shapes[static_cast<size_t>(layer.inputs[0])].channels;
        f = 2 * int64_t(layer.kernel) * layer.kernel * (in_ch / layer.groups) * elems;
        break;
      }
      case LayerKind::kNormAct:
        f = 2 * elems;
        break;
      case LayerKind::kAdd:
        f = elems;
        break;
      case LayerKind::kGlobalAvgPool: {
        const LayerShape& in = shapes[static_cast<size_t>(layer.inputs[0])];
        f = int64_t(in.channels) * in.width * in.height;
        break;
      }
      case LayerKind::kFc: {
        const int in_ch = shapes[static_cast<size_t>(layer.inputs[0])].channels;
        f = 2 * int64_t(in_ch) * layer.out_ch;
        break;
      }
      default:
        break;  // input/concat/maxpool: no arithmetic counted
    }
    out.per_layer[i] = f;
    out.total += f;
  }
  return out;
}

ActivationMemory activation_memory(const NetGraph& g, int batch, int width, int height) {
  const auto shapes = infer_shapes(g, width, height);
  const int n = static_cast<int>(g.layers.size());
  std::vector<int64_t> bytes(static_cast<size_t>(n));
  std::vector<int> last_use(static_cast<size_t>(n));
  int64_t sum = 0;
  for (int i = 0; i < n; ++i) {
    bytes[static_cast<size_t>(i)] =
        4LL * shapes[static_cast<size_t>(i)].channels * shapes[static_cast<size_t>(i)].width *
        shapes[static_cast<size_t>(i)].height;
    sum += bytes[static_cast<size_t>(i)];
    last_use[static_cast<size_t>(i)] = n - 1;  // network output stays live
  }
  for (int i = 0; i < n; ++i) {
    for (int idx : g.layers[static_cast<size_t>(i)].inputs) {
      last_use[static_cast<size_t>(idx)] = std::max(last_use[static_cast<size_t>(idx)], i);
    }
  }
  // Only the final layer keeps its "live to the end" default; intermediate
  // layers with no consumer would be dead code.
  for (int i = 0; i < n - 1; ++i) {
    bool consumed = false;
    for (int j = i + 1; j < n && !consumed; ++j) {
      for (int idx : g.layers[static_cast<size_t>(j)].inputs) consumed |= idx == i;
    }
    if (consumed) {
      int lu = 0;
      for (int j = i + 1; j < n; ++j) {
        for (int idx : g.layers[static_cast<size_t>(j)].inputs) {
          if (idx == i) lu = j;
        }
      }
      last_use[static_cast<size_t>(i)] = lu;
    }
  }

  int64_t peak = 0;
  for (int t = 0; t < n; ++t) {
    int64_t live = 0;
    for (int i = 0; i <= t; ++i) {
      if (last_use[static_cast<size_t>(i)] >= t) live += bytes[static_cast<size_t>(i)];
    }
    peak = std::max(peak, live);
  }

  ActivationMemory m;
  m.forward_peak_bytes = peak * batch;
  m.forward_sum_bytes = sum * batch;
  m.backward_bytes = 2 * sum * batch;
  return m;
}

int64_t training_footprint_bytes(const NetGraph& g, int batch, int width, int height) {
  const ParamCount params = count_params(g);
  const ActivationMemory act = activation_memory(g, batch, width, height);
  return kRuntimeReserveBytes + 2 * 4 * params.total + act.backward_bytes;
}

ForwardCheck forward_shapes(const NetGraph& g, int width, int height, uint64_t seed) {
  const auto shapes = infer_shapes(g, width, height);
  std::vector<std::vector<float>> acts(g.layers.size());

  for (size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& layer = g.layers[i];
    const LayerShape& s = shapes[i];
    const size_t elems = static_cast<size_t>(s.channels) * s.width * s.height;
    std::vector<float>& out = acts[i];
    out.assign(elems, 0.0f);
    auto at = [&s](std::vector<float>& t, int c, int y, int x) -> float& {
      return t[(static_cast<size_t>(c) * s.height + y) * s.width + x];
    };

    switch (layer.kind) {
      case LayerKind::kInput: {
        Rng rng(Rng::mix(seed, 0x1A));
        for (float& v : out) v = static_cast<float>(rng.normal());
        break;
      }
      case LayerKind::kConv: {
        const LayerShape& si = shapes[static_cast<size_t>(layer.inputs[0])];
        const std::vector<float>& in = acts[static_cast<size_t>(layer.inputs[0])];
        const int pad = (layer.kernel - 1) / 2;
        const int cpg_in = si.channels / layer.groups;
        const int cpg_out = s.channels / layer.groups;
        Rng rng(Rng::mix(seed, i, 0xC0));
        const double wscale = std::sqrt(2.0 / (layer.kernel * layer.kernel * cpg_in));
        std::vector<float> wts(static_cast<size_t>(s.channels) * cpg_in * layer.kernel * layer.kernel);
        for (float& v : wts) v = static_cast<float>(wscale * rng.normal());
        for (int oc = 0; oc < s.channels; ++oc) {
          const int grp = oc / cpg_out;
          for (int oy = 0; oy < s.height; ++oy) {
            for (int ox = 0; ox < s.width; ++ox) {
              double accum = 0.0;
              for (int ic = 0; ic < cpg_in; ++ic) {
                const int in_c = grp * cpg_in + ic;
                for (int ky = 0; ky < layer.kernel; ++ky) {
                  const int iy = oy * layer.stride + ky - pad;
                  if (iy < 0 || iy >= si.height) continue;
                  for (int kx = 0; kx < layer.kernel; ++kx) {
                    const int ix = ox * layer.stride + kx - pad;
                    if (ix < 0 || ix >= si.width) continue;
                    const size_t widx =
                        ((static_cast<size_t>(oc) * cpg_in + ic) * layer.kernel + ky) * layer.kernel + kx;
                    accum += wts[widx] *
                             in[(static_cast<size_t>(in_c) * si.height + iy) * si.width + ix];
                  }
                }
              }
              at(out, oc, oy, ox) = static_cast<float>(accum);
            }
          }
        }
        break;
      }
      case LayerKind::kNormAct: {
        const std::vector<float>& in = acts[static_cast<size_t>(layer.inputs[0])];
        const int spatial = s.width * s.height;
        for (int c = 0; c < s.channels; ++c) {
          double mean = 0.0, var = 0.0;
          for (int p = 0; p < spatial; ++p) mean += in[static_cast<size_t>(c) * spatial + p];
          mean /= spatial;
          for (int p = 0; p < spatial; ++p) {
            const double d = in[static_cast<size_t>(c) * spatial + p] - mean;
            var += d * d;
          }
          var /= spatial;
          const double inv = 1.0 / std::sqrt(var + 1e-5);
          for (int p = 0; p < spatial; ++p) {
            const double v = (in[static_cast<size_t>(c) * spatial + p] - mean) * inv;
            out[static_cast<size_t>(c) * spatial + p] = static_cast<float>(std::max(0.0, v));
          }
        }
        break;
      }
      case LayerKind::kConcat: {
        size_t off = 0;
        for (int idx : layer.inputs) {
          const std::vector<float>& in = acts[static_cast<size_t>(idx)];
          std::copy(in.begin(), in.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
          off += in.size();
        }
        break;
      }
      case LayerKind::kAdd: {
        for (int idx : layer.inputs) {
          const std::vector<float>& in = acts[static_cast<size_t>(idx)];
          for (size_t p = 0; p < out.size(); ++p) out[p] += in[p];
        }
        break;
      }
      case LayerKind::kMaxPool: {
        const LayerShape& si = shapes[static_cast<size_t>(layer.inputs[0])];
        const std::vector<float>& in = acts[static_cast<size_t>(layer.inputs[0])];
        const int pad = (layer.kernel - 1) / 2;
        for (int c = 0; c < s.channels; ++c) {
          for (int oy = 0; oy < s.height; ++oy) {
            for (int ox = 0; ox < s.width; ++ox) {
              float best = -1e30f;
              for (int ky = 0; ky < layer.kernel; ++ky) {
                const int iy = oy * layer.stride + ky - pad;
                if (iy < 0 || iy >= si.height) continue;
                for (int kx = 0; kx < layer.kernel; ++kx) {
                  const int ix = ox * layer.stride + kx - pad;
                  if (ix < 0 || ix >= si.width) continue;
                  best = std::max(best, in[(static_cast<size_t>(c) * si.height + iy) * si.width + ix]);
                }
              }
              at(out, c, oy, ox) = best;
            }
          }
        }
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        const LayerShape& si = shapes[static_cast<size_t>(layer.inputs[0])];
        const std::vector<float>& in = acts[static_cast<size_t>(layer.inputs[0])];
        const int spatial = si.width * si.height;
        for (int c = 0; c < s.channels; ++c) {
          double mean = 0.0;
          for (int p = 0; p < spatial; ++p) mean += in[static_cast<size_t>(c) * spatial + p];
          out[static_cast<size_t>(c)] = static_cast<float>(mean / spatial);
        }
        break;
      }
      case LayerKind::kFc: {
        const LayerShape& si = shapes[static_cast<size_t>(layer.inputs[0])];
        const std::vector<float>& in = acts[static_cast<size_t>(layer.inputs[0])];
        Rng rng(Rng::mix(seed, i, 0xFC));
        const double wscale = std::sqrt(1.0 / si.channels);
        for (int oc = 0; oc < s.channels; ++oc) {
          double accum = 0.0;
          for (int ic = 0; ic < si.channels; ++ic) accum += wscale * rng.normal() * in[static_cast<size_t>(ic)];
          out[static_cast<size_t>(oc)] = static_cast<float>(accum);
        }
        break;
      }
    }
  }

  ForwardCheck check;
  check.shapes = shapes;
  double sum = 0.0;
  for (float v : acts.back()) sum += v;
  check.checksum = sum;
  return check;
}

}  // namespace mocap::net
