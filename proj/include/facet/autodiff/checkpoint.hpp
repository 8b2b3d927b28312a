#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "facet/autodiff/mlp.hpp"

// "FACW" parameter checkpoint: magic, u32 version, then for each layer
// rows u32, cols u32, rows*cols f64 weights (row-major), cols f64 biases.
// Everything little-endian. Activations and dropout live in the JSON sidecar
// of the owning model.

namespace facet::ad {

inline constexpr std::array<char, 4> kFacwMagic{'F', 'A', 'C', 'W'};
inline constexpr std::uint32_t kFacwVersion = 1;

namespace le {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void write(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool read(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace le

struct RawLayer {
  Tensor weight;
  Tensor bias;
};

inline void write_facw(const std::filesystem::path& path, const std::vector<RawLayer>& layers) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kFacwMagic.data(), 4);
  le::write<std::uint32_t>(os, kFacwVersion);
  for (const RawLayer& l : layers) {
    le::write<std::uint32_t>(os, static_cast<std::uint32_t>(l.weight.rows()));
    le::write<std::uint32_t>(os, static_cast<std::uint32_t>(l.weight.cols()));
    for (double v : l.weight.data()) le::write(os, v);
    for (double v : l.bias.data()) le::write(os, v);
  }
  if (!os) throw Error("write failed: " + path.string());
}

inline std::vector<RawLayer> read_facw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DependencyError("missing checkpoint: " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kFacwMagic) throw FormatError(path.string() + ": bad FACW magic");
  std::uint32_t version = 0;
  if (!le::read(is, version) || version != kFacwVersion) {
    throw FormatError(path.string() + ": unsupported FACW version " + std::to_string(version));
  }
  std::vector<RawLayer> layers;
  std::uint32_t rows = 0;
  while (le::read(is, rows)) {
    std::uint32_t cols = 0;
    if (!le::read(is, cols) || rows == 0 || cols == 0) {
      throw FormatError(path.string() + ": truncated layer header at layer " + std::to_string(layers.size()));
    }
    RawLayer l{Tensor::zeros(rows, cols), Tensor::zeros(1, cols)};
    for (double& v : l.weight.data())
      if (!le::read(is, v)) throw FormatError(path.string() + ": truncated weights");
    for (double& v : l.bias.data())
      if (!le::read(is, v)) throw FormatError(path.string() + ": truncated biases");
    layers.push_back(std::move(l));
  }
  return layers;
}

inline void save_mlp(const std::filesystem::path& path, const MlpParams& params) {
  std::vector<RawLayer> raw;
  for (const Layer& l : params.layers) raw.push_back({l.weight.value, l.bias.value});
  write_facw(path, raw);
}

/// Restores weights into a network whose architecture (activations, dropout)
/// is already known; shapes must agree.
inline void load_mlp(const std::filesystem::path& path, MlpParams& params) {
  auto raw = read_facw(path);
  if (raw.size() != params.layers.size()) {
    throw DimensionError(path.string() + ": " + std::to_string(raw.size()) + " layers, expected " +
                         std::to_string(params.layers.size()));
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Layer& l = params.layers[i];
    if (raw[i].weight.shape() != l.weight.value.shape()) {
      throw DimensionError(path.string() + ": layer " + std::to_string(i) + " has shape " +
                           shape_string(raw[i].weight.shape()) + ", expected " +
                           shape_string(l.weight.value.shape()));
    }
    l.weight.value = std::move(raw[i].weight);
    l.bias.value = std::move(raw[i].bias);
    ++l.weight.version;
    ++l.bias.version;
  }
}

}  // namespace facet::ad
