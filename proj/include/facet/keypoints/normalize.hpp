#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "facet/keypoints/frame.hpp"
#include "facet/util/log.hpp"

namespace facet::kp {

inline constexpr double kStdFloor = 1e-6;

/// Per-coordinate standardization fitted on training frames.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dim() const { return mean.size(); }
};

/// Streaming mean/variance (Welford), so fitting never needs every frame in memory.
class NormAccumulator {
 public:
  void add(std::span<const double> v) {
    if (n_ == 0) {
      mean_.assign(v.size(), 0.0);
      m2_.assign(v.size(), 0.0);
    } else if (v.size() != mean_.size()) {
      throw DimensionError("fit_normalizer: frame width " + std::to_string(v.size()) + " != " +
                           std::to_string(mean_.size()));
    }
    ++n_;
    const double inv = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = v[i] - mean_[i];
      mean_[i] += d * inv;
      m2_[i] += d * (v[i] - mean_[i]);
    }
  }

  std::size_t count() const { return n_; }

  /// Population std; dimensions below the floor are clamped with a warning.
  NormStats finish() const {
    if (n_ < 2) throw ParameterError("fit_normalizer needs at least 2 frames, got " + std::to_string(n_));
    NormStats s{mean_, std::vector<double>(mean_.size())};
    std::size_t floored = 0;
    for (std::size_t i = 0; i < s.std.size(); ++i) {
      const double sd = std::sqrt(m2_[i] / static_cast<double>(n_));
      if (sd < kStdFloor) {
        s.std[i] = kStdFloor;
        ++floored;
      } else {
        s.std[i] = sd;
      }
    }
    if (floored > 0) {
      warn("fit_normalizer: " + std::to_string(floored) + " constant dimension(s); std floored at 1e-6");
    }
    return s;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

inline NormStats fit_normalizer(const std::vector<Clip>& clips) {
  NormAccumulator acc;
  for (const Clip& c : clips)
    for (const FrameKeypoints& f : c.frames) acc.add(f.points);
  return acc.finish();
}

inline std::vector<double> apply_normalizer(const NormStats& s, std::span<const double> frame) {
  if (frame.size() != s.dim()) {
    throw DimensionError("apply_normalizer: frame width " + std::to_string(frame.size()) + " != " +
                         std::to_string(s.dim()));
  }
  std::vector<double> out(frame.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (frame[i] - s.mean[i]) / s.std[i];
  return out;
}

inline std::vector<double> apply_normalizer(const NormStats& s, const FrameKeypoints& frame) {
  return apply_normalizer(s, std::span<const double>(frame.points));
}

inline std::vector<double> invert_values(const NormStats& s, std::span<const double> v) {
  if (v.size() != s.dim()) {
    throw DimensionError("invert_normalizer: width " + std::to_string(v.size()) + " != " + std::to_string(s.dim()));
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * s.std[i] + s.mean[i];
  return out;
}

inline FrameKeypoints invert_normalizer(const NormStats& s, std::span<const double> v) {
  FrameKeypoints f;
  f.points = invert_values(s, v);
  return f;
}

inline nlohmann::json norm_to_json(const NormStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }

inline NormStats norm_from_json(const nlohmann::json& j, const std::string& where = "norm stats") {
  NormStats s;
  try {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (s.mean.size() != s.std.size() || s.mean.empty()) throw FormatError(where + ": mean/std length mismatch");
  for (double v : s.std)
    if (!(v > 0.0) || !std::isfinite(v)) throw FormatError(where + ": std must be positive and finite");
  return s;
}

inline void save_norm(const std::filesystem::path& p, const NormStats& s) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw Error("cannot open " + p.string() + " for writing");
  os << norm_to_json(s).dump() << '\n';
}

inline NormStats load_norm(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw DependencyError("missing normalization file: " + p.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  return norm_from_json(j, p.string());
}

}  // namespace facet::kp
