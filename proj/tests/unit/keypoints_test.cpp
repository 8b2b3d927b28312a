#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "facet/keypoints/clips.hpp"
#include "facet/keypoints/io.hpp"
#include "facet/keypoints/normalize.hpp"

using namespace facet;
using namespace facet::kp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "facet_keypoints_test";
  fs::create_directories(dir);
  return dir / name;
}

FrameKeypoints random_frame(std::mt19937_64& rng, double t, std::size_t landmarks = kDefaultLandmarks) {
  std::normal_distribution<double> n(0.0, 1.0);
  FrameKeypoints f;
  f.timestamp = t;
  f.source_id = "spk";
  f.points.resize(landmarks * 3);
  for (double& v : f.points) v = n(rng);
  return f;
}

std::string frame_line(double t, std::size_t landmarks, double fill) {
  std::string pts;
  for (std::size_t i = 0; i < landmarks; ++i) {
    if (i) pts += ",";
    pts += "[" + std::to_string(fill) + "," + std::to_string(fill + 1) + "," + std::to_string(i) + "]";
  }
  return R"({"source_id":"a","t":)" + std::to_string(t) + R"(,"fps":25,"domain":"X","points":[)" + pts + "]}";
}

}  // namespace

TEST(Ingest, TwoFrameJsonl) {
  const auto p = scratch("two.jsonl");
  {
    std::ofstream os(p);
    os << frame_line(0.0, kDefaultLandmarks, 0.25) << '\n' << frame_line(0.04, kDefaultLandmarks, 0.5) << '\n';
  }
  const auto track = ingest_track(p, Format::jsonl);
  ASSERT_EQ(track.frames.size(), 2u);
  EXPECT_EQ(track.domain, "X");
  EXPECT_DOUBLE_EQ(track.fps, 25.0);
  EXPECT_DOUBLE_EQ(track.frames[1].timestamp, 0.04);
  EXPECT_DOUBLE_EQ(track.frames[0].points[0], 0.25);
  EXPECT_DOUBLE_EQ(track.frames[1].points[1], 1.5);
  EXPECT_DOUBLE_EQ(track.frames[1].points[3 * 477 + 2], 477.0);
}

TEST(Ingest, WrongLandmarkCountNamesLine) {
  const auto p = scratch("short.jsonl");
  {
    std::ofstream os(p);
    os << frame_line(0.0, kDefaultLandmarks, 0.0) << '\n' << frame_line(0.04, 477, 0.0) << '\n';
  }
  try {
    ingest(p, Format::jsonl);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("short.jsonl:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("477"), std::string::npos) << e.what();
  }
}

TEST(Ingest, NonMonotonicTimestampsRejected) {
  const auto p = scratch("order.jsonl");
  {
    std::ofstream os(p);
    os << frame_line(0.08, 4, 0.0) << '\n' << frame_line(0.04, 4, 0.0) << '\n';
  }
  EXPECT_THROW(ingest(p, Format::jsonl, 4), OrderingError);
}

TEST(Ingest, PackedWrongLandmarkCountNamesOffset) {
  std::mt19937_64 rng(1);
  KeypointTrack t;
  t.frames = {random_frame(rng, 0.0, 10)};
  const auto p = scratch("ten.fkp");
  write_packed(p, t);
  try {
    ingest(p, Format::packed, 11);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 12"), std::string::npos) << e.what();
  }
}

TEST(Ingest, TruncatedPackedFile) {
  std::mt19937_64 rng(2);
  KeypointTrack t;
  t.frames = {random_frame(rng, 0.0, 5), random_frame(rng, 0.04, 5)};
  const auto p = scratch("trunc.fkp");
  write_packed(p, t);
  fs::resize_file(p, fs::file_size(p) - 8);
  EXPECT_THROW(ingest(p, Format::packed, 5), FormatError);
}

TEST(Ingest, MissingFile) { EXPECT_THROW(ingest(scratch("nope.jsonl"), Format::jsonl), DependencyError); }

TEST(Ingest, JsonlPackedJsonlRoundTripIsBitIdentical) {
  std::mt19937_64 rng(3);
  KeypointTrack t;
  t.fps = 30.0;
  t.domain = "Y";
  t.source_id = "spk";
  for (int i = 0; i < 3; ++i) t.frames.push_back(random_frame(rng, i / 30.0));
  const auto a = scratch("rt_a.jsonl"), b = scratch("rt_b.fkp"), c = scratch("rt_c.jsonl");
  write_jsonl(a, t);
  auto t1 = ingest_track(a, Format::jsonl);
  write_packed(b, t1);
  auto t2 = ingest_track(b, Format::packed);
  t2.domain = t1.domain;
  write_jsonl(c, t2);
  auto t3 = ingest_track(c, Format::jsonl);
  ASSERT_EQ(t3.frames.size(), t.frames.size());
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    EXPECT_EQ(t3.frames[i].points, t.frames[i].points);
    EXPECT_EQ(t3.frames[i].timestamp, t.frames[i].timestamp);
  }
  EXPECT_EQ(t3.fps, 30.0);
}

// Anything the writers produce must read back exactly, in both formats.
TEST(Ingest, FuzzRoundTripOverOwnWriters) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> n_frames(1, 6), n_landmarks(1, 12), pick(0, 5);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double specials[] = {0.0, -0.0, 1e-300, -4.9e-324, 1.7976931348623157e308, 0.1};
  for (int trial = 0; trial < 60; ++trial) {
    KeypointTrack t;
    t.fps = 1.0 + std::abs(nd(rng)) * 50.0;
    t.domain = trial % 2 ? "X" : "Y";
    const int lm = n_landmarks(rng);
    double ts = nd(rng);
    for (int i = 0, n = n_frames(rng); i < n; ++i) {
      FrameKeypoints f = random_frame(rng, ts, static_cast<std::size_t>(lm));
      for (double& v : f.points)
        if (pick(rng) == 0) v = specials[pick(rng)];
      t.frames.push_back(std::move(f));
      ts += std::abs(nd(rng)) * (i % 2);  // includes repeated timestamps
    }
    for (Format fmt : {Format::jsonl, Format::packed}) {
      const auto p = scratch(fmt == Format::jsonl ? "fuzz.jsonl" : "fuzz.fkp");
      write_track(p, t, fmt);
      const auto back = ingest_track(p, fmt, static_cast<std::size_t>(lm));
      ASSERT_EQ(back.frames.size(), t.frames.size());
      EXPECT_EQ(back.fps, t.fps);
      for (std::size_t i = 0; i < t.frames.size(); ++i) {
        for (std::size_t k = 0; k < t.frames[i].points.size(); ++k) {
          EXPECT_EQ(std::signbit(back.frames[i].points[k]), std::signbit(t.frames[i].points[k]));
          EXPECT_EQ(back.frames[i].points[k], t.frames[i].points[k]);
        }
        EXPECT_EQ(back.frames[i].timestamp, t.frames[i].timestamp);
      }
    }
  }
}

namespace {

std::vector<FrameKeypoints> ramp(std::size_t n, double fps, double slope, double offset) {
  std::vector<FrameKeypoints> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fps;
    out.push_back({{offset + slope * t, -slope * t, 2.0}, t, "r"});
  }
  return out;
}

}  // namespace

TEST(Resample, MidpointOfLinearInterpolation) {
  std::vector<FrameKeypoints> in = {{{0.0, 0.0, 0.0}, 0.0, "a"}, {{1.0, 2.0, 3.0}, 1.0, "a"}};
  const auto half = resample_fps(in, 4.0, 2.0);
  ASSERT_EQ(half.size(), 3u);
  EXPECT_DOUBLE_EQ(half[1].timestamp, 0.5);
  EXPECT_DOUBLE_EQ(half[1].points[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1].points[2], 1.5);
}

TEST(Resample, EqualRatesIsIdentity) {
  std::mt19937_64 rng(5);
  std::vector<FrameKeypoints> in;
  for (int i = 0; i < 10; ++i) in.push_back(random_frame(rng, i / 25.0, 4));
  const auto out = resample_fps(in, 25.0, 25.0);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i].points, in[i].points);
}

TEST(Resample, FiftyToTwentyFiveStaysOnRamp) {
  const auto in = ramp(101, 50.0, 0.7, -3.0);
  const auto out = resample_fps(in, 50.0, 25.0);
  ASSERT_EQ(out.size(), 51u);
  double worst = 0.0;
  for (const auto& f : out) {
    worst = std::max(worst, std::abs(f.points[0] - (-3.0 + 0.7 * f.timestamp)));
    worst = std::max(worst, std::abs(f.points[1] + 0.7 * f.timestamp));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Resample, NonIntegerRatioOnRamp) {
  const auto in = ramp(300, 29.97, 1.3, 0.5);
  const auto out = resample_fps(in, 29.97, 25.0);
  for (const auto& f : out) EXPECT_NEAR(f.points[0], 0.5 + 1.3 * f.timestamp, 1e-12);
}

TEST(Resample, ConstantSignalPreservedExactly) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    FrameKeypoints base = random_frame(rng, 0.0, 3);
    std::vector<FrameKeypoints> in;
    const double fps = 25.0 + trial * 3.7;
    for (int i = 0; i < 40; ++i) {
      FrameKeypoints f = base;
      f.timestamp = i / fps;
      in.push_back(f);
    }
    for (const auto& f : resample_fps(in, fps, 25.0)) EXPECT_EQ(f.points, base.points);
  }
}

TEST(Resample, UpsampleRejected) {
  const auto in = ramp(4, 10.0, 1.0, 0.0);
  EXPECT_THROW(resample_fps(in, 10.0, 25.0), UnsupportedError);
}

TEST(ExtractClips, WindowArithmetic) {
  std::vector<FrameKeypoints> frames(400, FrameKeypoints{{0.0, 0.0, 0.0}, 0.0, "s"});
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].points[0] = static_cast<double>(i);
  auto clips = extract_clips(frames, 176, 176);
  ASSERT_EQ(clips.size(), 2u);
  EXPECT_EQ(clips[0].frames.front().points[0], 0.0);
  EXPECT_EQ(clips[1].frames.front().points[0], 176.0);
  EXPECT_EQ(clips[1].length(), 176u);
  EXPECT_EQ(window_starts(400, 176, 112), (std::vector<std::size_t>{0, 112, 224}));
  frames.resize(175);
  EXPECT_TRUE(extract_clips(frames, 176, 176).empty());
  EXPECT_THROW(window_starts(400, 176, 0), ParameterError);
}

TEST(ExtractClips, CountFormula) {
  for (std::size_t n = 1; n < 300; n += 7)
    for (std::size_t len : {1u, 16u, 64u, 176u})
      for (std::size_t stride : {1u, 5u, 64u, 176u}) {
        const auto got = window_starts(n, len, stride).size();
        const std::size_t expect = n >= len ? (n - len) / stride + 1 : 0;
        EXPECT_EQ(got, expect) << n << " " << len << " " << stride;
      }
}

TEST(Split, NinetyTenDisjointAndSeeded) {
  const auto s = split_indices(1000, 0.9, 11);
  EXPECT_EQ(s.train.size(), 900u);
  EXPECT_EQ(s.test.size(), 100u);
  std::vector<int> seen(1000, 0);
  for (auto i : s.train) ++seen[i];
  for (auto i : s.test) ++seen[i];
  for (int v : seen) EXPECT_EQ(v, 1);
  EXPECT_EQ(split_indices(1000, 0.9, 11).test, s.test);
  EXPECT_NE(split_indices(1000, 0.9, 12).test, s.test);
}

TEST(Normalize, TwoFramesDifferingInOneCoordinate) {
  Clip c;
  FrameKeypoints a{std::vector<double>(kDefaultLandmarks * 3, 0.3), 0.0, "s"};
  FrameKeypoints b = a;
  a.points[0] = 1.0;
  b.points[0] = 4.0;
  c.frames = {a, b};
  ScopedWarningCapture warnings;
  const NormStats s = fit_normalizer({c});
  EXPECT_DOUBLE_EQ(s.mean[0], 2.5);
  EXPECT_DOUBLE_EQ(s.std[0], 1.5);
  EXPECT_DOUBLE_EQ(apply_normalizer(s, a)[0], -1.0);
  EXPECT_DOUBLE_EQ(apply_normalizer(s, b)[0], 1.0);
  EXPECT_EQ(apply_normalizer(s, a)[1], 0.0);
  ASSERT_EQ(warnings.messages().size(), 1u);  // the other 1433 dimensions are constant
}

TEST(Normalize, ApplyInvertIsIdentity) {
  std::mt19937_64 rng(7);
  Clip c;
  for (int i = 0; i < 30; ++i) c.frames.push_back(random_frame(rng, i));
  for (auto& f : c.frames)
    for (std::size_t k = 0; k < f.points.size(); ++k) f.points[k] = f.points[k] * (1 + k % 5) + 0.1 * k;
  const NormStats s = fit_normalizer({c});
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_frame(rng, 0.0);
    const auto back = invert_normalizer(s, apply_normalizer(s, f));
    for (std::size_t k = 0; k < f.points.size(); ++k) EXPECT_NEAR(back.points[k], f.points[k], 1e-12);
  }
  // Standardized training data: mean ~ 0, std ~ 1 in every dimension.
  std::vector<double> sum(s.dim(), 0.0), sq(s.dim(), 0.0);
  for (const auto& f : c.frames) {
    const auto z = apply_normalizer(s, f);
    for (std::size_t k = 0; k < z.size(); ++k) {
      sum[k] += z[k];
      sq[k] += z[k] * z[k];
    }
  }
  for (std::size_t k = 0; k < s.dim(); ++k) {
    EXPECT_NEAR(sum[k] / 30.0, 0.0, 1e-12);
    EXPECT_NEAR(sq[k] / 30.0, 1.0, 1e-12);
  }
}

TEST(Normalize, IdenticalFramesGiveZerosWithWarning) {
  std::mt19937_64 rng(8);
  Clip c;
  const auto f = random_frame(rng, 0.0);
  c.frames = {f, f, f};
  ScopedWarningCapture warnings;
  const NormStats s = fit_normalizer({c});
  for (double v : s.std) EXPECT_EQ(v, kStdFloor);
  for (double v : apply_normalizer(s, f)) EXPECT_EQ(v, 0.0);
  ASSERT_EQ(warnings.messages().size(), 1u);
  EXPECT_NE(warnings.messages()[0].find("floored"), std::string::npos);
}

TEST(Normalize, NeedsTwoFramesAndJsonRoundTrip) {
  std::mt19937_64 rng(9);
  Clip c;
  c.frames = {random_frame(rng, 0.0, 2)};
  EXPECT_THROW(fit_normalizer({c}), ParameterError);
  c.frames.push_back(random_frame(rng, 1.0, 2));
  const NormStats s = fit_normalizer({c});
  const auto p = scratch("norm.json");
  save_norm(p, s);
  const NormStats back = load_norm(p);
  EXPECT_EQ(back.mean, s.mean);
  EXPECT_EQ(back.std, s.std);
}
