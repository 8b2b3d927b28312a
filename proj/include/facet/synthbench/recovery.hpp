#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "facet/autodiff/tensor.hpp"
#include "facet/error.hpp"
#include "facet/synthbench/synthbench.hpp"
#include "facet/translate/model.hpp"

namespace facet::synth {

inline constexpr double kAlignThreshold = 0.3;

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column of each row.
inline std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost.front().size();
  if (m < n) throw ParameterError("hungarian: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  // potentials u (rows), v (cols); p[j] = row matched to col j; 1-based with 0 as the virtual root
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) out[p[j] - 1] = j - 1;
  return out;
}

inline double correlation(const Tensor& a, std::size_t ca, const Tensor& b, std::size_t cb) {
  const std::size_t n = a.rows();
  double ma = 0.0, mb = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ma += a.at(r, ca);
    mb += b.at(r, cb);
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double da = a.at(r, ca) - ma, db = b.at(r, cb) - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Planted factor i is read off latent latent_of_factor[i] as
/// z = slope[i] * s + intercept[i].
struct Alignment {
  std::vector<std::optional<std::size_t>> latent_of_factor;
  std::vector<double> correlation;  // signed; 0 for unmatched factors
  std::vector<double> slope;
  std::vector<double> intercept;

  bool complete() const {
    for (const auto& m : latent_of_factor)
      if (!m) return false;
    return !latent_of_factor.empty();
  }
};

/// Matches factors to candidate latents by maximal total |correlation| over
/// paired samples (rows of `latents` and `factors`). Matches below
/// `threshold` are dropped and flagged.
inline Alignment align_latents(const Tensor& latents, const Tensor& factors, std::span<const std::size_t> candidates,
                               double threshold = kAlignThreshold) {
  if (latents.rows() != factors.rows()) throw DimensionError("align_latents: latents and factors differ in sample count");
  if (latents.rows() < 2) throw ParameterError("align_latents needs at least 2 samples");
  for (auto c : candidates)
    if (c >= latents.cols()) throw DimensionError("align_latents: candidate latent out of range");
  const std::size_t nf = factors.cols(), nc = candidates.size();
  std::vector<std::vector<double>> corr(nf, std::vector<double>(nc));
  for (std::size_t i = 0; i < nf; ++i)
    for (std::size_t j = 0; j < nc; ++j) corr[i][j] = correlation(latents, candidates[j], factors, i);

  Alignment out;
  out.latent_of_factor.assign(nf, std::nullopt);
  out.correlation.assign(nf, 0.0);
  out.slope.assign(nf, 0.0);
  out.intercept.assign(nf, 0.0);
  if (nc == 0) return out;

  std::vector<std::optional<std::size_t>> pick(nf);
  if (nf <= nc) {
    std::vector<std::vector<double>> cost(nf, std::vector<double>(nc));
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t j = 0; j < nc; ++j) cost[i][j] = -std::abs(corr[i][j]);
    const auto a = hungarian(cost);
    for (std::size_t i = 0; i < nf; ++i) pick[i] = a[i];
  } else {
    std::vector<std::vector<double>> cost(nc, std::vector<double>(nf));
    for (std::size_t j = 0; j < nc; ++j)
      for (std::size_t i = 0; i < nf; ++i) cost[j][i] = -std::abs(corr[i][j]);
    const auto a = hungarian(cost);
    for (std::size_t j = 0; j < nc; ++j) pick[a[j]] = j;
  }

  const double n = static_cast<double>(latents.rows());
  for (std::size_t i = 0; i < nf; ++i) {
    if (!pick[i] || std::abs(corr[i][*pick[i]]) < threshold) continue;
    const std::size_t lat = candidates[*pick[i]];
    double ms = 0.0, mz = 0.0;
    for (std::size_t r = 0; r < latents.rows(); ++r) {
      ms += factors.at(r, i);
      mz += latents.at(r, lat);
    }
    ms /= n;
    mz /= n;
    double sz = 0.0, ss = 0.0;
    for (std::size_t r = 0; r < latents.rows(); ++r) {
      const double ds = factors.at(r, i) - ms;
      sz += ds * (latents.at(r, lat) - mz);
      ss += ds * ds;
    }
    out.latent_of_factor[i] = lat;
    out.correlation[i] = corr[i][*pick[i]];
    out.slope[i] = sz / ss;
    out.intercept[i] = mz - out.slope[i] * ms;
  }
  return out;
}

/// What a trained translation model says about one clip, in latent units.
struct LearnedClip {
  std::vector<double> tau;                              // c - 1 change-points, 1-based frame scale
  std::vector<translate::Translator> translators;       // one per chunk
};

struct RecoveryScore {
  double shift_mae = 0.0;
  double scale_mae = 0.0;
  double changepoint_mae = 0.0;  // frames
  bool active_dim_match = false;
  bool alignment_complete = false;
  // per-factor, per-segment population-mean translators in factor units
  std::vector<SegmentTranslator> recovered;
};

/// Latent translator (omega, phi) on an axis with z = a s + b, re-expressed on s.
inline std::pair<double, double> to_factor_units(double omega, double phi, double a, double b) {
  return {omega, (phi + (omega - 1.0) * b) / a};
}

/// Scores learned translators and change-points against the plant.
/// `planted_changepoints[n]` lists the planted change-points of clip n: the
/// first segment covers 1-based frames 1..p. Chunk k is compared with planted
/// segment k; translators are averaged over clips before taking the error.
inline RecoveryScore recovery_error(const Alignment& align, std::size_t active_count,
                                    const std::vector<LearnedClip>& learned,
                                    const std::vector<std::vector<std::size_t>>& planted_changepoints,
                                    const std::vector<SegmentTranslator>& planted) {
  if (learned.empty()) throw ParameterError("recovery_error: no learned clips");
  if (learned.size() != planted_changepoints.size()) {
    throw DimensionError("recovery_error: " + std::to_string(learned.size()) + " learned clips vs " +
                         std::to_string(planted_changepoints.size()) + " planted");
  }
  const std::size_t nf = align.latent_of_factor.size();
  const std::size_t segments = planted.size();
  for (const auto& p : planted)
    if (p.omega.size() != nf || p.phi.size() != nf) throw DimensionError("recovery_error: planted width != factors");

  RecoveryScore score;
  score.alignment_complete = align.complete();
  score.active_dim_match = score.alignment_complete && active_count == nf;

  double cp_sum = 0.0;
  std::size_t cp_n = 0;
  for (std::size_t c = 0; c < learned.size(); ++c) {
    const LearnedClip& lc = learned[c];
    if (lc.translators.size() != segments || lc.tau.size() + 1 != segments ||
        planted_changepoints[c].size() + 1 != segments) {
      throw DimensionError("recovery_error: chunk count of clip " + std::to_string(c) + " does not match " +
                           std::to_string(segments) + " planted segments");
    }
    for (std::size_t k = 0; k < lc.tau.size(); ++k) {
      cp_sum += std::abs(lc.tau[k] - static_cast<double>(planted_changepoints[c][k]));
      ++cp_n;
    }
  }
  score.changepoint_mae = cp_n ? cp_sum / static_cast<double>(cp_n) : 0.0;

  score.recovered.assign(segments, SegmentTranslator{std::vector<double>(nf, 0.0), std::vector<double>(nf, 0.0)});
  double shift = 0.0, scale = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < nf; ++i) {
    if (!align.latent_of_factor[i]) continue;
    const std::size_t lat = *align.latent_of_factor[i];
    for (std::size_t k = 0; k < segments; ++k) {
      double om = 0.0, ph = 0.0;
      for (const LearnedClip& lc : learned) {
        const translate::Translator& tr = lc.translators[k];
        if (lat >= tr.omega.size()) throw DimensionError("recovery_error: translator narrower than aligned latent");
        const auto [o, p] = to_factor_units(tr.omega[lat], tr.phi[lat], align.slope[i], align.intercept[i]);
        om += o;
        ph += p;
      }
      om /= static_cast<double>(learned.size());
      ph /= static_cast<double>(learned.size());
      score.recovered[k].omega[i] = om;
      score.recovered[k].phi[i] = ph;
      scale += std::abs(om - planted[k].omega[i]);
      shift += std::abs(ph - planted[k].phi[i]);
      ++terms;
    }
  }
  if (terms == 0) {
    score.shift_mae = score.scale_mae = std::numeric_limits<double>::infinity();
  } else {
    score.shift_mae = shift / static_cast<double>(terms);
    score.scale_mae = scale / static_cast<double>(terms);
  }
  return score;
}

}  // namespace facet::synth
