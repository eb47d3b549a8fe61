#include "mocap/maps.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mocap {

void StageOneMaps::reset(int map_w, int map_h) {
  width = map_w;
  height = map_h;
  for (int j = 0; j < kNumJoints; ++j) {
    auto sj = static_cast<size_t>(j);
    heat[sj].setZero(map_h, map_w);
    paf_x[sj].setZero(map_h, map_w);
    paf_y[sj].setZero(map_h, map_w);
    enc[sj].setZero(map_h * map_w, 3 * kNumJoints);
  }
}

double sample_bilinear(const MapGrid& g, double u, double v) {
  const int w = static_cast<int>(g.cols());
  const int h = static_cast<int>(g.rows());
  u = std::min(std::max(u, 0.0), w - 1.0);
  v = std::min(std::max(v, 0.0), h - 1.0);
  const int u0 = std::min(static_cast<int>(u), w - 2 >= 0 ? w - 2 : 0);
  const int v0 = std::min(static_cast<int>(v), h - 2 >= 0 ? h - 2 : 0);
  const int u1 = std::min(u0 + 1, w - 1);
  const int v1 = std::min(v0 + 1, h - 1);
  const double fu = u - u0;
  const double fv = v - v0;
  return g(v0, u0) * (1 - fu) * (1 - fv) + g(v0, u1) * fu * (1 - fv) +
         g(v1, u0) * (1 - fu) * fv + g(v1, u1) * fu * fv;
}

namespace {

constexpr uint32_t kMagic = 0x4D544E53;  // 'MTNS'
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("tensor file: truncated");
  return v;
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("tensor file: cannot open " + path);
  put(os, kMagic);
  put(os, kVersion);
  put(os, static_cast<uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    put(os, static_cast<uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put(os, static_cast<uint32_t>(t.dims.size()));
    uint64_t total = 1;
    for (uint64_t d : t.dims) {
      put(os, d);
      total *= d;
    }
    if (total != t.data.size()) throw std::runtime_error("tensor file: dims/data mismatch");
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("tensor file: cannot open " + path);
  if (get<uint32_t>(is) != kMagic) throw std::runtime_error("tensor file: bad magic");
  if (get<uint32_t>(is) != kVersion) throw std::runtime_error("tensor file: bad version");
  const uint32_t count = get<uint32_t>(is);
  std::vector<NamedTensor> out(count);
  for (NamedTensor& t : out) {
    const uint32_t name_len = get<uint32_t>(is);
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    const uint32_t ndim = get<uint32_t>(is);
    t.dims.resize(ndim);
    uint64_t total = 1;
    for (uint64_t& d : t.dims) {
      d = get<uint64_t>(is);
      total *= d;
    }
    t.data.resize(total);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!is) throw std::runtime_error("tensor file: truncated");
  }
  return out;
}

void write_maps(const std::string& path, const StageOneMaps& maps) {
  const auto w = static_cast<uint64_t>(maps.width);
  const auto h = static_cast<uint64_t>(maps.height);
  std::vector<NamedTensor> tensors;

  NamedTensor heat{"heat", {kNumJoints, h, w}, {}};
  NamedTensor paf{"paf", {kNumJoints, 2, h, w}, {}};
  NamedTensor enc{"enc", {kNumJoints, h * w, 3 * kNumJoints}, {}};
  heat.data.reserve(kNumJoints * h * w);
  paf.data.reserve(kNumJoints * 2 * h * w);
  enc.data.reserve(kNumJoints * h * w * 3 * kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    const auto sj = static_cast<size_t>(j);
    for (int v = 0; v < maps.height; ++v)
      for (int u = 0; u < maps.width; ++u) heat.data.push_back(maps.heat[sj](v, u));
    for (int v = 0; v < maps.height; ++v)
      for (int u = 0; u < maps.width; ++u) paf.data.push_back(maps.paf_x[sj](v, u));
    for (int v = 0; v < maps.height; ++v)
      for (int u = 0; u < maps.width; ++u) paf.data.push_back(maps.paf_y[sj](v, u));
    for (Eigen::Index r = 0; r < maps.enc[sj].rows(); ++r)
      for (Eigen::Index c = 0; c < maps.enc[sj].cols(); ++c) enc.data.push_back(maps.enc[sj](r, c));
  }
  tensors.push_back(std::move(heat));
  tensors.push_back(std::move(paf));
  tensors.push_back(std::move(enc));
  write_tensor_file(path, tensors);
}

}  // namespace mocap
