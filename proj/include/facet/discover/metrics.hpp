#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "facet/error.hpp"
#include "facet/translate/model.hpp"
#include "facet/translate/train.hpp"

namespace facet::discover {

using ad::Tensor;

/// Fraction of correct threshold-0.5 decisions: real (label 1) counts when
/// p >= 0.5, translated (label 0) when p < 0.5.
inline double accuracy_from_probs(std::span<const double> real, std::span<const double> translated) {
  if (real.empty()) throw ParameterError("discriminator_accuracy: no real samples");
  if (translated.empty()) throw ParameterError("discriminator_accuracy: no translated samples");
  std::size_t correct = 0;
  for (double p : real) correct += p >= 0.5;
  for (double p : translated) correct += p < 0.5;
  return static_cast<double>(correct) / static_cast<double>(real.size() + translated.size());
}

/// Accuracy of `disc` on flattened latent clips (rows of t*l).
inline double discriminator_accuracy(const translate::Discriminator& disc, const Tensor& real_latents,
                                     const Tensor& translated_latents) {
  if (real_latents.empty() || translated_latents.empty()) {
    throw ParameterError("discriminator_accuracy: both latent sets must be non-empty");
  }
  const Tensor pr = translate::discriminate(disc, real_latents);
  const Tensor pf = translate::discriminate(disc, translated_latents);
  return accuracy_from_probs(pr.data(), pf.data());
}

/// Mean of the last `window` per-epoch accuracies.
inline double trailing_accuracy(const std::vector<translate::EpochMetrics>& log, std::size_t window = 100) {
  return translate::final_accuracy(log, window);
}

struct Aggregate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% confidence interval
  std::size_t n = 0;
};

/// Mean and Student-t 95% CI half-width (n - 1 degrees of freedom).
inline Aggregate aggregate_values(std::span<const double> v) {
  if (v.size() < 2) throw ParameterError("aggregate_runs needs at least 2 runs, got " + std::to_string(v.size()));
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double tq = boost::math::quantile(dist, 0.975);
  return {mean, tq * sd / std::sqrt(n), v.size()};
}

/// Per-position aggregate over equally long logs, one log per run.
inline std::vector<Aggregate> aggregate_runs(const std::vector<std::vector<double>>& logs) {
  if (logs.size() < 2) throw ParameterError("aggregate_runs needs at least 2 runs, got " + std::to_string(logs.size()));
  const std::size_t len = logs.front().size();
  for (std::size_t r = 1; r < logs.size(); ++r) {
    if (logs[r].size() != len) {
      throw AlignmentError("aggregate_runs: run " + std::to_string(r) + " has " + std::to_string(logs[r].size()) +
                           " entries, run 0 has " + std::to_string(len));
    }
  }
  std::vector<Aggregate> out;
  std::vector<double> col(logs.size());
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t r = 0; r < logs.size(); ++r) col[r] = logs[r][i];
    out.push_back(aggregate_values(col));
  }
  return out;
}

}  // namespace facet::discover
