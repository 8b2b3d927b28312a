#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "facet/keypoints/frame.hpp"

namespace facet::kp {

enum class Format { jsonl, packed };

inline constexpr std::array<char, 4> kPackedMagic{'F', 'K', 'P', '1'};
inline constexpr std::uint32_t kPackedVersion = 1;

static_assert(std::endian::native == std::endian::little, "packed keypoint I/O assumes a little-endian host");

inline Format parse_format(const std::string& s) {
  if (s == "jsonl") return Format::jsonl;
  if (s == "packed" || s == "fkp") return Format::packed;
  throw ConfigError("unknown keypoint format '" + s + "' (expected jsonl or packed)");
}

/// Guess from the extension: .jsonl / .json are JSONL, everything else packed.
inline Format format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return (ext == ".jsonl" || ext == ".json") ? Format::jsonl : Format::packed;
}

namespace detail {

inline void check_order(const KeypointTrack& t, const std::string& where) {
  const auto& fr = t.frames;
  if (fr.size() >= 2 && fr[fr.size() - 1].timestamp < fr[fr.size() - 2].timestamp) {
    throw OrderingError(where + ": timestamp " + std::to_string(fr.back().timestamp) + " precedes " +
                        std::to_string(fr[fr.size() - 2].timestamp));
  }
}

inline KeypointTrack read_jsonl(std::istream& is, const std::string& name, std::size_t landmarks) {
  KeypointTrack track;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    FrameKeypoints f;
    try {
      f.timestamp = j.at("t").get<double>();
      f.source_id = j.value("source_id", std::string{});
      const auto& pts = j.at("points");
      if (!pts.is_array()) throw FormatError(where + ": points is not an array");
      f.points.reserve(pts.size() * 3);
      for (const auto& p : pts) {
        if (!p.is_array() || p.size() != 3) throw FormatError(where + ": landmark is not an [x, y, z] triple");
        for (const auto& c : p) f.points.push_back(c.get<double>());
      }
      if (first) {
        track.fps = j.value("fps", kCanonicalFps);
        track.domain = j.value("domain", std::string{});
        track.source_id = f.source_id;
        first = false;
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    check_frame(f, landmarks, where);
    track.frames.push_back(std::move(f));
    check_order(track, where);
  }
  return track;
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& name) {
  T v{};
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError(name + ": truncated at byte offset " + std::to_string(offset));
  }
  return v;
}

inline KeypointTrack read_packed(std::istream& is, const std::string& name, std::size_t landmarks) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kPackedMagic) throw FormatError(name + ": bad FKP1 magic at byte offset 0");
  const auto version = get<std::uint32_t>(is, name);
  if (version != kPackedVersion) {
    throw FormatError(name + ": unsupported packed version " + std::to_string(version) + " at byte offset 4");
  }
  const auto count = get<std::uint32_t>(is, name);
  const auto n_landmarks = get<std::uint16_t>(is, name);
  if (n_landmarks != landmarks) {
    throw FormatError(name + ": byte offset 12: " + std::to_string(n_landmarks) + " landmarks, expected " +
                      std::to_string(landmarks));
  }
  KeypointTrack track;
  track.fps = get<double>(is, name);
  track.frames.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = name + ": byte offset " + std::to_string(static_cast<long long>(is.tellg()));
    FrameKeypoints f;
    f.timestamp = get<double>(is, name);
    f.points.resize(landmarks * 3);
    const auto bytes = static_cast<std::streamsize>(f.points.size() * sizeof(double));
    if (!is.read(reinterpret_cast<char*>(f.points.data()), bytes)) throw FormatError(where + ": truncated frame");
    check_frame(f, landmarks, where);
    track.frames.push_back(std::move(f));
    check_order(track, where);
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError(name + ": trailing bytes after " + std::to_string(count) + " frames");
  }
  return track;
}

}  // namespace detail

/// Reads one keypoint file. Landmark count and timestamp order are checked per
/// frame; errors name the line (JSONL) or byte offset (packed).
inline KeypointTrack ingest_track(const std::filesystem::path& path, Format format,
                                  std::size_t landmarks = kDefaultLandmarks) {
  std::ifstream is(path, format == Format::packed ? std::ios::binary : std::ios::in);
  if (!is) throw DependencyError("missing keypoint file: " + path.string());
  auto track = format == Format::jsonl ? detail::read_jsonl(is, path.string(), landmarks)
                                       : detail::read_packed(is, path.string(), landmarks);
  for (auto& f : track.frames)
    if (f.source_id.empty()) f.source_id = track.source_id.empty() ? path.stem().string() : track.source_id;
  if (track.source_id.empty()) track.source_id = path.stem().string();
  return track;
}

inline std::vector<FrameKeypoints> ingest(const std::filesystem::path& path, Format format,
                                          std::size_t landmarks = kDefaultLandmarks) {
  return ingest_track(path, format, landmarks).frames;
}

inline void write_jsonl(const std::filesystem::path& path, const KeypointTrack& track) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& f : track.frames) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i + 2 < f.points.size(); i += 3) pts.push_back({f.points[i], f.points[i + 1], f.points[i + 2]});
    nlohmann::json j = {{"source_id", f.source_id.empty() ? track.source_id : f.source_id},
                        {"t", f.timestamp},
                        {"fps", track.fps},
                        {"domain", track.domain},
                        {"points", std::move(pts)}};
    os << j.dump() << '\n';
  }
  if (!os) throw Error("write failed: " + path.string());
}

inline void write_packed(const std::filesystem::path& path, const KeypointTrack& track) {
  const std::size_t landmarks = track.frames.empty() ? kDefaultLandmarks : track.frames.front().landmark_count();
  if (landmarks > 0xFFFF) throw FormatError("packed format holds at most 65535 landmarks");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kPackedMagic.data(), 4);
  detail::put<std::uint32_t>(os, kPackedVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(track.frames.size()));
  detail::put<std::uint16_t>(os, static_cast<std::uint16_t>(landmarks));
  detail::put<double>(os, track.fps);
  for (const auto& f : track.frames) {
    if (f.landmark_count() != landmarks) throw FormatError("packed writer: frames disagree on landmark count");
    detail::put<double>(os, f.timestamp);
    os.write(reinterpret_cast<const char*>(f.points.data()), static_cast<std::streamsize>(f.points.size() * sizeof(double)));
  }
  if (!os) throw Error("write failed: " + path.string());
}

inline void write_track(const std::filesystem::path& path, const KeypointTrack& track, Format format) {
  if (format == Format::jsonl) write_jsonl(path, track);
  else write_packed(path, track);
}

}  // namespace facet::kp
