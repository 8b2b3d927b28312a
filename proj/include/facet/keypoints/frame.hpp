#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "facet/error.hpp"

namespace facet::kp {

inline constexpr std::size_t kDefaultLandmarks = 478;
inline constexpr double kCanonicalFps = 25.0;

enum class Domain { x, y };

inline const char* domain_name(Domain d) { return d == Domain::x ? "X" : "Y"; }

inline Domain parse_domain(const std::string& s) {
  if (s == "X" || s == "x") return Domain::x;
  if (s == "Y" || s == "y") return Domain::y;
  throw FormatError("unknown domain label '" + s + "' (expected X or Y)");
}

/// One frame: landmark coordinates flattened as x0 y0 z0 x1 y1 z1 ...
struct FrameKeypoints {
  std::vector<double> points;
  double timestamp = 0.0;
  std::string source_id;

  std::size_t landmark_count() const { return points.size() / 3; }
  std::size_t dim() const { return points.size(); }
};

inline void check_frame(const FrameKeypoints& f, std::size_t landmarks, const std::string& where) {
  if (f.points.size() != landmarks * 3) {
    throw FormatError(where + ": " + std::to_string(f.points.size() / 3) + " landmarks, expected " +
                      std::to_string(landmarks));
  }
  for (double v : f.points)
    if (!std::isfinite(v)) throw FormatError(where + ": non-finite coordinate");
  if (!std::isfinite(f.timestamp)) throw FormatError(where + ": non-finite timestamp");
}

/// Frames of one tracked face, sorted by time.
struct KeypointTrack {
  std::vector<FrameKeypoints> frames;
  double fps = kCanonicalFps;
  std::string source_id;
  std::string domain;  // empty when the format does not carry it
};

struct Clip {
  std::vector<FrameKeypoints> frames;
  Domain domain = Domain::x;
  double fps = kCanonicalFps;
  std::string participant_id;

  std::size_t length() const { return frames.size(); }
};

}  // namespace facet::kp
