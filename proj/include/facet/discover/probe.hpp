#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "facet/autodiff/tensor.hpp"
#include "facet/error.hpp"
#include "facet/keypoints/clips.hpp"

namespace facet::discover {

using ad::Tensor;

struct ProbeConfig {
  double test_ratio = 0.1;
  std::size_t iterations = 2000;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  std::vector<double> weights;  // one per latent
  double bias = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

namespace detail {

inline double logistic(double a) { return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

inline double probe_accuracy(const Tensor& x, const std::vector<int>& y, const std::vector<std::size_t>& rows,
                             const std::vector<double>& w, double b) {
  if (rows.empty()) return 0.0;
  std::size_t correct = 0;
  for (auto r : rows) {
    double a = b;
    for (std::size_t j = 0; j < x.cols(); ++j) a += w[j] * x.at(r, j);
    correct += (a >= 0.0) == (y[r] == 1);
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace detail

/// Logistic regression of domain labels (0/1) on frame latents, fitted by
/// full-batch gradient descent with step 1/L on the training part; accuracy
/// is reported on a held-out split.
inline ProbeResult frame_classifier_probe(const Tensor& latents, const std::vector<int>& labels,
                                          const ProbeConfig& cfg = {}) {
  const std::size_t n = latents.rows(), l = latents.cols();
  if (labels.size() != n) throw DimensionError("frame_classifier_probe: label count != frame count");
  std::size_t ones = 0;
  for (int v : labels) {
    if (v != 0 && v != 1) throw ParameterError("frame_classifier_probe: labels must be 0 or 1");
    ones += v == 1;
  }
  if (ones == 0 || ones == n) throw ParameterError("frame_classifier_probe: needs frames of both domains");
  const auto split = kp::split_indices(n, 1.0 - cfg.test_ratio, cfg.seed);
  if (split.train.empty() || split.test.empty()) throw ParameterError("frame_classifier_probe: too few frames to split");

  // Lipschitz bound of the mean logistic loss gradient: 0.25 * mean ||(x, 1)||^2
  double sq = 0.0;
  for (auto r : split.train)
    for (std::size_t j = 0; j < l; ++j) sq += latents.at(r, j) * latents.at(r, j);
  const double m = static_cast<double>(split.train.size());
  const double step = 1.0 / (0.25 * (1.0 + sq / m) + cfg.l2);

  ProbeResult res;
  res.weights.assign(l, 0.0);
  std::vector<double> gw(l);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (auto r : split.train) {
      double a = res.bias;
      for (std::size_t j = 0; j < l; ++j) a += res.weights[j] * latents.at(r, j);
      const double e = detail::logistic(a) - static_cast<double>(labels[r]);
      for (std::size_t j = 0; j < l; ++j) gw[j] += e * latents.at(r, j);
      gb += e;
    }
    for (std::size_t j = 0; j < l; ++j) res.weights[j] -= step * (gw[j] / m + cfg.l2 * res.weights[j]);
    res.bias -= step * gb / m;
  }
  res.train_accuracy = detail::probe_accuracy(latents, labels, split.train, res.weights, res.bias);
  res.test_accuracy = detail::probe_accuracy(latents, labels, split.test, res.weights, res.bias);
  return res;
}

}  // namespace facet::discover
