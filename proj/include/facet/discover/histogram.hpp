#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "facet/autodiff/tensor.hpp"
#include "facet/error.hpp"

namespace facet::discover {

using ad::Tensor;

inline constexpr std::size_t kDefaultBins = 40;
inline constexpr double kModeProminence = 0.05;  // fraction of the max count

enum class Condition { source, target, translated };
inline constexpr std::array<Condition, 3> kConditions{Condition::source, Condition::target, Condition::translated};

inline const char* condition_name(Condition c) {
  switch (c) {
    case Condition::source: return "source";
    case Condition::target: return "target";
    case Condition::translated: return "translated";
  }
  return "?";
}

struct LatentHistogram {
  std::size_t latent_index = 0;
  std::vector<double> bin_edges;                    // bins + 1, ascending
  std::array<std::vector<std::size_t>, 3> counts;   // indexed by Condition
  std::array<std::vector<double>, 3> modes;         // bin centers
  std::array<std::size_t, 3> samples{};
  double mean_shift = 0.0;                          // mean(translated) - mean(source)

  const std::vector<std::size_t>& count(Condition c) const { return counts[static_cast<std::size_t>(c)]; }
  const std::vector<double>& mode(Condition c) const { return modes[static_cast<std::size_t>(c)]; }
};

/// Bin indices of local maxima whose topographic prominence reaches
/// `min_prominence` (the histogram is treated as zero outside its range).
/// Flat tops report their middle bin.
inline std::vector<std::size_t> find_modes(const std::vector<std::size_t>& counts, double min_prominence) {
  const std::size_t n = counts.size();
  std::vector<double> h(n + 2, 0.0);
  for (std::size_t i = 0; i < n; ++i) h[i + 1] = static_cast<double>(counts[i]);
  std::vector<std::size_t> out;
  std::size_t i = 1;
  while (i <= n) {
    std::size_t j = i;
    while (j + 1 <= n && h[j + 1] == h[i]) ++j;
    if (h[i] > 0.0 && h[i - 1] < h[i] && h[j + 1] < h[i]) {
      double left = h[i], right = h[i];
      for (std::size_t a = i; a-- > 0;) {
        if (h[a] > h[i]) break;
        left = std::min(left, h[a]);
      }
      for (std::size_t b = j + 1; b < h.size(); ++b) {
        if (h[b] > h[i]) break;
        right = std::min(right, h[b]);
      }
      if (h[i] - std::max(left, right) >= min_prominence) out.push_back((i + j) / 2 - 1);
    }
    i = j + 1;
  }
  return out;
}

/// Histograms of every latent in `dims` over three per-frame sample sets
/// (rows = frames, cols = latents). Bin edges are shared across conditions
/// and span the pooled range.
inline std::vector<LatentHistogram> latent_histograms(const Tensor& source, const Tensor& target,
                                                      const Tensor& translated, const std::vector<std::size_t>& dims,
                                                      std::size_t bins = kDefaultBins) {
  const std::array<const Tensor*, 3> sets{&source, &target, &translated};
  for (Condition c : kConditions) {
    if (sets[static_cast<std::size_t>(c)]->empty()) {
      throw ReportError(std::string("latent_histograms: condition '") + condition_name(c) + "' has no samples");
    }
  }
  if (bins == 0) throw ParameterError("latent_histograms: bins must be >= 1");
  const std::size_t width = source.cols();
  if (target.cols() != width || translated.cols() != width) {
    throw DimensionError("latent_histograms: conditions differ in latent width");
  }
  std::vector<LatentHistogram> out;
  for (std::size_t d : dims) {
    if (d >= width) throw DimensionError("latent_histograms: latent " + std::to_string(d) + " out of range");
    LatentHistogram h;
    h.latent_index = d;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Tensor* s : sets)
      for (std::size_t r = 0; r < s->rows(); ++r) {
        lo = std::min(lo, s->at(r, d));
        hi = std::max(hi, s->at(r, d));
      }
    if (!(hi > lo)) {  // constant latent: one unit-wide window around it
      lo -= 0.5;
      hi += 0.5;
    }
    h.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    h.bin_edges.back() = hi;
    std::array<double, 3> means{};
    for (Condition c : kConditions) {
      const std::size_t ci = static_cast<std::size_t>(c);
      const Tensor& s = *sets[ci];
      auto& cnt = h.counts[ci];
      cnt.assign(bins, 0);
      double sum = 0.0;
      for (std::size_t r = 0; r < s.rows(); ++r) {
        const double v = s.at(r, d);
        sum += v;
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        ++cnt[std::min(b, bins - 1)];
      }
      h.samples[ci] = s.rows();
      means[ci] = sum / static_cast<double>(s.rows());
      const double mx = static_cast<double>(*std::max_element(cnt.begin(), cnt.end()));
      for (std::size_t b : find_modes(cnt, kModeProminence * mx)) {
        h.modes[ci].push_back(0.5 * (h.bin_edges[b] + h.bin_edges[b + 1]));
      }
    }
    h.mean_shift = means[static_cast<std::size_t>(Condition::translated)] - means[static_cast<std::size_t>(Condition::source)];
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace facet::discover
