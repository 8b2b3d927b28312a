#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "facet/keypoints/frame.hpp"

namespace facet::kp {

/// Linear interpolation onto a dst_fps grid starting at the first timestamp.
/// Equal rates return the input unchanged.
inline std::vector<FrameKeypoints> resample_fps(const std::vector<FrameKeypoints>& frames, double src_fps,
                                                double dst_fps = kCanonicalFps) {
  if (!(dst_fps > 0.0)) throw ParameterError("resample_fps: dst_fps must be positive");
  if (src_fps < dst_fps) {
    throw UnsupportedError("resample_fps: upsampling " + std::to_string(src_fps) + " -> " + std::to_string(dst_fps) +
                           " fps is not supported");
  }
  if (frames.size() < 2) throw ParameterError("resample_fps: need at least 2 frames");
  if (src_fps == dst_fps) return frames;

  const double t0 = frames.front().timestamp;
  const double t_end = frames.back().timestamp;
  const double step = 1.0 / dst_fps;
  std::vector<FrameKeypoints> out;
  std::size_t j = 0;  // frames[j].timestamp <= t < frames[j+1].timestamp
  for (std::size_t k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) * step;
    if (t > t_end + 1e-9 * step) break;
    while (j + 2 < frames.size() && frames[j + 1].timestamp <= t) ++j;
    const FrameKeypoints& a = frames[j];
    const FrameKeypoints& b = frames[j + 1];
    const double span = b.timestamp - a.timestamp;
    const double w = span > 0.0 ? std::clamp((t - a.timestamp) / span, 0.0, 1.0) : 0.0;
    FrameKeypoints f;
    f.timestamp = t;
    f.source_id = a.source_id;
    f.points.resize(a.points.size());
    for (std::size_t i = 0; i < f.points.size(); ++i) f.points[i] = a.points[i] + w * (b.points[i] - a.points[i]);
    out.push_back(std::move(f));
  }
  return out;
}

/// Start indices of every full window; a trailing partial window is dropped.
inline std::vector<std::size_t> window_starts(std::size_t n_frames, std::size_t length, std::size_t stride) {
  if (stride == 0) throw ParameterError("extract_clips: stride must be >= 1");
  if (length == 0) throw ParameterError("extract_clips: length must be >= 1");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + length <= n_frames; s += stride) starts.push_back(s);
  return starts;
}

inline std::vector<Clip> extract_clips(const std::vector<FrameKeypoints>& frames, std::size_t length,
                                       std::size_t stride, Domain domain = Domain::x, double fps = kCanonicalFps,
                                       const std::string& participant_id = {}) {
  std::vector<Clip> clips;
  for (std::size_t s : window_starts(frames.size(), length, stride)) {
    Clip c;
    c.domain = domain;
    c.fps = fps;
    c.participant_id = participant_id.empty() ? frames[s].source_id : participant_id;
    c.frames.assign(frames.begin() + static_cast<std::ptrdiff_t>(s),
                    frames.begin() + static_cast<std::ptrdiff_t>(s + length));
    clips.push_back(std::move(c));
  }
  return clips;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded clip-level shuffle; the first round(ratio * n) go to train. Both
/// halves are returned in ascending index order.
inline SplitIndices split_indices(std::size_t n, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio <= 1.0)) throw ParameterError("split ratio must lie in (0, 1]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
  if (n >= 2 && n_train == n && train_ratio < 1.0) n_train = n - 1;
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace facet::kp
