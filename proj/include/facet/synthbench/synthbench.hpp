#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facet/autodiff/tensor.hpp"
#include "facet/error.hpp"
#include "facet/keypoints/frame.hpp"
#include "facet/keypoints/io.hpp"
#include "facet/util/json_io.hpp"

namespace facet::synth {

using ad::Tensor;

/// Affine map applied to factor trajectories inside one segment: s' = omega s + phi.
struct SegmentTranslator {
  std::vector<double> omega;
  std::vector<double> phi;

  static SegmentTranslator identity(std::size_t n) { return {std::vector<double>(n, 1.0), std::vector<double>(n, 0.0)}; }
};

/// Synthetic two-domain benchmark. Every clip is t frames of
/// base + sum_i s_i(time) direction_i + noise. Factor `regime_factor` holds
/// a level that flips sign at each change-point (the visible expression
/// switch); the other factors are sums of 2-4 random-phase sinusoids clipped
/// to +-3. Domain Y applies planted[k] to the factors of segment k.
struct SynthSpec {
  std::size_t t = 64;
  std::size_t landmarks = kp::kDefaultLandmarks;
  std::size_t n_factors = 3;
  std::size_t clip_count = 2000;  // per domain
  double fps = kp::kCanonicalFps;
  double noise_std = 0.005;
  std::uint64_t seed = 0;

  std::vector<double> factor_scales{1.0, 1.2, 0.9};
  std::size_t regime_factor = 0;
  double regime_level = 1.0;
  double regime_wobble = 0.3;
  std::vector<double> changepoint_fractions{0.55};  // one per change-point
  std::size_t changepoint_jitter = 6;               // uniform +-frames around each fraction
  std::vector<SegmentTranslator> planted;           // one per segment; empty = all identity

  std::vector<std::vector<double>> directions;  // empty = drawn from seed
  std::vector<double> base;                     // empty = drawn from seed

  std::size_t dim() const { return landmarks * 3; }
  std::size_t segment_count() const { return changepoint_fractions.size() + 1; }
};

/// Default benchmark: shift +1.5 on factor 1 and scale 0.5 on factor 2 in the
/// segment after a change-point near 55% of the clip.
inline SynthSpec default_spec(std::uint64_t seed = 0) {
  SynthSpec s;
  s.seed = seed;
  SegmentTranslator after = SegmentTranslator::identity(s.n_factors);
  after.phi[1] = 1.5;
  after.omega[2] = 0.5;
  s.planted = {SegmentTranslator::identity(s.n_factors), after};
  return s;
}

/// Identity plant: X and Y come from the same generator.
inline SynthSpec null_spec(std::uint64_t seed = 0) {
  SynthSpec s = default_spec(seed);
  s.planted = {SegmentTranslator::identity(s.n_factors), SegmentTranslator::identity(s.n_factors)};
  return s;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t clip_seed(std::uint64_t seed, kp::Domain d, std::size_t index) {
  return splitmix64(splitmix64(seed ^ (d == kp::Domain::x ? 0x58ULL : 0x59ULL)) + index);
}

inline std::vector<std::vector<double>> orthonormal_directions(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n > dim) throw SpecError("cannot draw " + std::to_string(n) + " orthonormal directions in " + std::to_string(dim) + " dims");
  std::mt19937_64 rng(splitmix64(seed ^ 0xd1ULL));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> dirs;
  while (dirs.size() < n) {
    std::vector<double> d(dim);
    for (double& v : d) v = nd(rng);
    for (int pass = 0; pass < 2; ++pass)  // re-orthogonalize once against rounding
      for (const auto& prev : dirs) {
        const double dot = std::inner_product(d.begin(), d.end(), prev.begin(), 0.0);
        for (std::size_t j = 0; j < dim; ++j) d[j] -= dot * prev[j];
      }
    const double norm = std::sqrt(std::inner_product(d.begin(), d.end(), d.begin(), 0.0));
    for (double& v : d) v /= norm;
    dirs.push_back(std::move(d));
  }
  return dirs;
}

/// Fills derived fields (directions, base) and checks every invariant.
inline SynthSpec resolve_spec(SynthSpec s) {
  if (s.t < 2) throw SpecError("synth.t must be >= 2");
  if (s.landmarks == 0) throw SpecError("synth.landmarks must be >= 1");
  if (s.n_factors == 0) throw SpecError("synth.n_factors must be >= 1");
  if (s.clip_count == 0) throw SpecError("synth.clip_count must be >= 1");
  if (!(s.fps > 0.0)) throw SpecError("synth.fps must be > 0");
  if (s.noise_std < 0.0) throw SpecError("synth.noise_std must be >= 0");
  if (s.factor_scales.size() != s.n_factors) {
    throw SpecError("synth.factor_scales has " + std::to_string(s.factor_scales.size()) + " entries for " +
                    std::to_string(s.n_factors) + " factors");
  }
  if (s.regime_factor >= s.n_factors) throw SpecError("synth.regime_factor out of range");
  double prev = 0.0;
  for (double f : s.changepoint_fractions) {
    if (!(f > prev && f < 1.0)) throw SpecError("synth.changepoint_fractions must be ascending in (0, 1)");
    prev = f;
  }
  // every jittered change-point must stay strictly inside the clip and ordered
  std::vector<double> centers;
  for (double f : s.changepoint_fractions) centers.push_back(std::round(f * static_cast<double>(s.t)));
  const double j = static_cast<double>(s.changepoint_jitter);
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (centers[k] - j < 1.0 || centers[k] + j > static_cast<double>(s.t) - 1.0) {
      throw SpecError("change-point " + std::to_string(k) + " with jitter leaves the clip interior");
    }
    if (k > 0 && centers[k] - j <= centers[k - 1] + j) throw SpecError("jittered change-points may collide");
  }
  if (s.planted.empty()) s.planted.assign(s.segment_count(), SegmentTranslator::identity(s.n_factors));
  if (s.planted.size() != s.segment_count()) {
    throw SpecError("synth.planted has " + std::to_string(s.planted.size()) + " segments, expected " +
                    std::to_string(s.segment_count()));
  }
  for (const auto& p : s.planted) {
    if (p.omega.size() != s.n_factors || p.phi.size() != s.n_factors) {
      throw SpecError("planted translator width does not match n_factors");
    }
  }
  if (s.directions.empty()) s.directions = orthonormal_directions(s.n_factors, s.dim(), s.seed);
  if (s.directions.size() != s.n_factors) throw SpecError("synth.directions must list one vector per factor");
  for (std::size_t a = 0; a < s.n_factors; ++a) {
    if (s.directions[a].size() != s.dim()) throw SpecError("factor direction " + std::to_string(a) + " has wrong length");
    for (std::size_t b = a; b < s.n_factors; ++b) {
      const double dot = std::inner_product(s.directions[a].begin(), s.directions[a].end(), s.directions[b].begin(), 0.0);
      const double want = a == b ? 1.0 : 0.0;
      if (std::abs(dot - want) > 1e-10) {
        throw SpecError("factor directions " + std::to_string(a) + " and " + std::to_string(b) +
                        " are not orthonormal (dot " + std::to_string(dot) + ")");
      }
    }
  }
  if (s.base.empty()) {
    std::mt19937_64 rng(splitmix64(s.seed ^ 0xbaULL));
    std::uniform_real_distribution<double> u(0.2, 0.8);
    s.base.resize(s.dim());
    for (double& v : s.base) v = u(rng);
  }
  if (s.base.size() != s.dim()) throw SpecError("synth.base has wrong length");
  return s;
}

/// Ground truth of one generated clip.
struct ClipTruth {
  std::vector<std::size_t> changepoints;  // segment k+1 starts at 0-based frame changepoints[k]
  Tensor factors;                         // t x n_factors, after the plant (what the frames encode)
  Tensor source_factors;                  // t x n_factors, before the plant
};

struct SynthClip {
  kp::Clip clip;
  ClipTruth truth;
};

inline std::size_t segment_of(const std::vector<std::size_t>& cps, std::size_t frame) {
  std::size_t k = 0;
  while (k < cps.size() && frame >= cps[k]) ++k;
  return k;
}

/// Deterministic in (spec, domain, index). `spec` must be resolved.
inline SynthClip generate_clip(const SynthSpec& spec, kp::Domain domain, std::size_t index) {
  std::mt19937_64 rng(clip_seed(spec.seed, domain, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t t = spec.t, nf = spec.n_factors, dim = spec.dim();
  const double two_pi = 2.0 * std::numbers::pi;

  SynthClip out;
  ClipTruth& truth = out.truth;
  const auto jitter = static_cast<long>(spec.changepoint_jitter);
  std::uniform_int_distribution<long> jit(-jitter, jitter);
  for (double f : spec.changepoint_fractions) {
    truth.changepoints.push_back(static_cast<std::size_t>(std::lround(f * static_cast<double>(t)) + jit(rng)));
  }

  truth.source_factors = Tensor::zeros(t, nf);
  for (std::size_t i = 0; i < nf; ++i) {
    if (i == spec.regime_factor) {
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      const double period = (0.5 + 3.5 * unit(rng)) * spec.fps, phase = two_pi * unit(rng);
      for (std::size_t r = 0; r < t; ++r) {
        const double level = (segment_of(truth.changepoints, r) % 2 == 0 ? sign : -sign) * spec.regime_level;
        truth.source_factors.at(r, i) =
            spec.factor_scales[i] * (level + spec.regime_wobble * std::sin(two_pi * static_cast<double>(r) / period + phase));
      }
    } else {
      const int waves = 2 + static_cast<int>(unit(rng) * 3.0);  // 2..4
      const double amp = spec.factor_scales[i] * std::sqrt(2.0 / waves);
      std::vector<double> period(waves), phase(waves);
      for (int w = 0; w < waves; ++w) {
        period[w] = (0.5 + 3.5 * unit(rng)) * spec.fps;
        phase[w] = two_pi * unit(rng);
      }
      for (std::size_t r = 0; r < t; ++r) {
        double v = 0.0;
        for (int w = 0; w < waves; ++w) v += amp * std::sin(two_pi * static_cast<double>(r) / period[w] + phase[w]);
        truth.source_factors.at(r, i) = std::clamp(v, -3.0, 3.0);
      }
    }
  }
  truth.factors = truth.source_factors;
  if (domain == kp::Domain::y) {
    for (std::size_t r = 0; r < t; ++r) {
      const SegmentTranslator& p = spec.planted[segment_of(truth.changepoints, r)];
      for (std::size_t i = 0; i < nf; ++i) truth.factors.at(r, i) = p.omega[i] * truth.factors.at(r, i) + p.phi[i];
    }
  }

  out.clip.domain = domain;
  out.clip.fps = spec.fps;
  out.clip.participant_id = std::string(kp::domain_name(domain)) + "_" + std::to_string(index);
  out.clip.frames.resize(t);
  for (std::size_t r = 0; r < t; ++r) {
    kp::FrameKeypoints& f = out.clip.frames[r];
    f.timestamp = static_cast<double>(r) / spec.fps;
    f.source_id = out.clip.participant_id;
    f.points = spec.base;
    if (spec.noise_std > 0.0)
      for (double& v : f.points) v += spec.noise_std * nd(rng);
    for (std::size_t i = 0; i < nf; ++i) {
      const double s = truth.factors.at(r, i);
      const auto& d = spec.directions[i];
      for (std::size_t j = 0; j < dim; ++j) f.points[j] += s * d[j];
    }
  }
  return out;
}

/// Lazily generated clip sets of both domains.
class DomainPair {
 public:
  explicit DomainPair(const SynthSpec& spec) : spec_(resolve_spec(spec)) {}

  const SynthSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return spec_.clip_count; }

  SynthClip get(kp::Domain d, std::size_t index) const {
    if (index >= spec_.clip_count) throw ParameterError("synth clip index " + std::to_string(index) + " out of range");
    return generate_clip(spec_, d, index);
  }
  kp::Clip clip(kp::Domain d, std::size_t index) const { return get(d, index).clip; }

  std::vector<kp::Clip> clips(kp::Domain d) const {
    std::vector<kp::Clip> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(clip(d, i));
    return out;
  }

 private:
  SynthSpec spec_;
};

inline DomainPair make_domain_pair(const SynthSpec& spec) { return DomainPair(spec); }

// ---- ledger ---------------------------------------------------------------------------

inline nlohmann::json spec_json(const SynthSpec& s) {
  nlohmann::json planted = nlohmann::json::array();
  for (const auto& p : s.planted) planted.push_back({{"omega", p.omega}, {"phi", p.phi}});
  return {{"t", s.t},
          {"landmarks", s.landmarks},
          {"n_factors", s.n_factors},
          {"clip_count", s.clip_count},
          {"fps", s.fps},
          {"noise_std", s.noise_std},
          {"seed", s.seed},
          {"factor_scales", s.factor_scales},
          {"regime_factor", s.regime_factor},
          {"regime_level", s.regime_level},
          {"regime_wobble", s.regime_wobble},
          {"changepoint_fractions", s.changepoint_fractions},
          {"changepoint_jitter", s.changepoint_jitter},
          {"planted", planted}};
}

/// {spec, clips: {X: [{id, changepoints}], Y: [...]}, translators: [...]}
inline nlohmann::json ledger_json(const DomainPair& pair) {
  nlohmann::json clips = nlohmann::json::object();
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < pair.size(); ++i) {
      const SynthClip c = pair.get(d, i);
      arr.push_back({{"id", c.clip.participant_id}, {"changepoints", c.truth.changepoints}});
    }
    clips[kp::domain_name(d)] = arr;
  }
  return {{"spec", spec_json(pair.spec())}, {"clips", clips}, {"translators", spec_json(pair.spec())["planted"]}};
}

/// Writes <dir>/X/<id>.<ext>, <dir>/Y/<id>.<ext> (one track per clip) and
/// <dir>/ledger.json.
inline void write_domain_pair(const DomainPair& pair, const std::filesystem::path& dir, kp::Format format) {
  const std::string ext = format == kp::Format::jsonl ? ".jsonl" : ".fkp";
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) {
    const auto sub = dir / kp::domain_name(d);
    std::filesystem::create_directories(sub);
    for (std::size_t i = 0; i < pair.size(); ++i) {
      const kp::Clip c = pair.clip(d, i);
      kp::KeypointTrack track{c.frames, c.fps, c.participant_id, kp::domain_name(d)};
      kp::write_track(sub / (c.participant_id + ext), track, format);
    }
  }
  write_json_file(dir / "ledger.json", ledger_json(pair));
}

}  // namespace facet::synth
