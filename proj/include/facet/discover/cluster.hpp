#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "facet/autodiff/tensor.hpp"
#include "facet/error.hpp"
#include "facet/util/log.hpp"

namespace facet::discover {

using ad::Tensor;

struct KMeansConfig {
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
  std::uint64_t seed = 0;
};

struct ClusterModel {
  std::size_t k = 0;
  Tensor centroids;  // k x d
  std::vector<std::size_t> assignments;
  double sse = 0.0;  // sum of squared distances to assigned centroids
  double bic = 0.0;
  std::vector<double> objective_trace;  // sse after every assignment step of the chosen restart
};

inline double squared_distance(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    const double d = a.at(ra, j) - b.at(rb, j);
    s += d * d;
  }
  return s;
}

/// Nearest centroid of row r; ties go to the lowest index.
inline std::size_t nearest_centroid(const Tensor& x, std::size_t r, const Tensor& c, double* dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.rows(); ++k) {
    const double d = squared_distance(x, r, c, k);
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  if (dist) *dist = bd;
  return best;
}

inline std::size_t distinct_rows(const Tensor& x) {
  std::set<std::vector<double>> seen;
  for (std::size_t r = 0; r < x.rows(); ++r) seen.emplace(x.row_span(r).begin(), x.row_span(r).end());
  return seen.size();
}

namespace detail {

inline Tensor kmeanspp_init(const Tensor& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  Tensor c = Tensor::zeros(k, x.cols());
  auto copy_row = [&](std::size_t from, std::size_t to) {
    for (std::size_t j = 0; j < x.cols(); ++j) c.at(to, j) = x.at(from, j);
  };
  copy_row(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng), 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      d2[r] = std::min(d2[r], squared_distance(x, r, c, m - 1));
      total += d2[r];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t r = 0; r < n; ++r) {
        if (u < d2[r]) {
          pick = r;
          break;
        }
        u -= d2[r];
      }
    }
    copy_row(pick, m);
  }
  return c;
}

struct LloydResult {
  Tensor centroids;
  std::vector<std::size_t> assign;
  double sse = 0.0;
  std::vector<double> trace;
};

inline LloydResult lloyd(const Tensor& x, Tensor c, std::size_t max_iterations) {
  const std::size_t n = x.rows(), k = c.rows(), d = x.cols();
  LloydResult res;
  res.assign.assign(n, k);  // k = unassigned, forces a first pass
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double sse = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t a = nearest_centroid(x, r, c, &dist[r]);
      changed |= a != res.assign[r];
      res.assign[r] = a;
      sse += dist[r];
    }
    res.trace.push_back(sse);
    res.sse = sse;
    if (!changed) break;
    Tensor sum = Tensor::zeros(k, d);
    std::vector<std::size_t> size(k, 0);
    for (std::size_t r = 0; r < n; ++r) {
      ++size[res.assign[r]];
      for (std::size_t j = 0; j < d; ++j) sum.at(res.assign[r], j) += x.at(r, j);
    }
    for (std::size_t m = 0; m < k; ++m) {
      if (size[m] == 0) {  // empty cluster: move it onto the worst-served point
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        for (std::size_t j = 0; j < d; ++j) c.at(m, j) = x.at(far, j);
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) c.at(m, j) = sum.at(m, j) / static_cast<double>(size[m]);
    }
  }
  res.centroids = std::move(c);
  return res;
}

}  // namespace detail

/// Spherical-Gaussian BIC (log-likelihood minus half the parameter count
/// times ln n) with one variance shared by all clusters; higher is better.
inline double kmeans_bic(const Tensor& x, const std::vector<std::size_t>& assign, std::size_t k, double sse) {
  const double n = static_cast<double>(x.rows()), d = static_cast<double>(x.cols());
  if (x.rows() <= k) return -std::numeric_limits<double>::infinity();
  // variance floor relative to the data spread, so exact fits stay finite
  double total = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double m = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) m += x.at(r, j);
    m /= n;
    for (std::size_t r = 0; r < x.rows(); ++r) total += (x.at(r, j) - m) * (x.at(r, j) - m);
  }
  const double floor = std::max(1e-12 * total / (n * d), 1e-300);
  const double var = std::max(sse / (d * (n - static_cast<double>(k))), floor);
  std::vector<std::size_t> size(k, 0);
  for (auto a : assign) ++size[a];
  double ll = 0.0;
  for (std::size_t m = 0; m < k; ++m) {
    if (size[m] == 0) continue;
    const double nm = static_cast<double>(size[m]);
    ll += nm * std::log(nm / n) - 0.5 * nm * d * std::log(2.0 * std::numbers::pi * var);
  }
  ll -= 0.5 * d * (n - static_cast<double>(k));
  const double params = static_cast<double>(k - 1) + static_cast<double>(k) * d + 1.0;
  return ll - 0.5 * params * std::log(n);
}

/// k-means++ seeding, Lloyd iterations, best of `restarts` by SSE (earliest
/// restart wins ties). k above the number of distinct rows is reduced with a
/// warning.
inline ClusterModel kmeans(const Tensor& x, std::size_t k, const KMeansConfig& cfg = {}) {
  if (k == 0) throw ParameterError("kmeans: k must be >= 1");
  if (x.rows() < k) {
    throw ParameterError("kmeans: " + std::to_string(x.rows()) + " points for k = " + std::to_string(k));
  }
  if (cfg.restarts == 0 || cfg.max_iterations == 0) throw ParameterError("kmeans: restarts and iterations must be >= 1");
  const std::size_t distinct = distinct_rows(x);
  if (k > distinct) {
    warn("kmeans: only " + std::to_string(distinct) + " distinct points; k reduced from " + std::to_string(k));
    k = distinct;
  }
  std::mt19937_64 rng(cfg.seed);
  std::optional<detail::LloydResult> best;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    auto res = detail::lloyd(x, detail::kmeanspp_init(x, k, rng), cfg.max_iterations);
    if (!best || res.sse < best->sse) best = std::move(res);
  }
  ClusterModel m;
  m.k = k;
  m.centroids = std::move(best->centroids);
  m.assignments = std::move(best->assign);
  m.sse = best->sse;
  m.objective_trace = std::move(best->trace);
  m.bic = kmeans_bic(x, m.assignments, k, m.sse);
  return m;
}

/// Clusters per-chunk translator features. Without `k`, scans k = 1..k_max
/// and keeps the highest BIC (smaller k on ties).
inline ClusterModel cluster_translators(const Tensor& features, std::optional<std::size_t> k, std::size_t k_max = 10,
                                        const KMeansConfig& cfg = {}) {
  if (features.rows() == 0) throw ParameterError("cluster_translators: no features");
  if (k) return kmeans(features, *k, cfg);
  if (k_max == 0) throw ParameterError("cluster_translators: k_max must be >= 1");
  const std::size_t top = std::min({k_max, distinct_rows(features), features.rows()});
  std::optional<ClusterModel> best;
  for (std::size_t kk = 1; kk <= top; ++kk) {
    ClusterModel m = kmeans(features, kk, cfg);
    if (!best || m.bic > best->bic) best = std::move(m);
  }
  return *best;
}

/// counts[i][j] = number of consecutive chunk pairs going from cluster j to i.
struct TransitionMatrix {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const {
    std::size_t s = 0;
    for (const auto& row : counts)
      for (auto v : row) s += v;
    return s;
  }
};

inline TransitionMatrix transition_matrix(const std::vector<std::vector<std::size_t>>& sequences, std::size_t k) {
  TransitionMatrix t{k, std::vector<std::vector<std::size_t>>(k, std::vector<std::size_t>(k, 0))};
  for (const auto& seq : sequences) {
    for (auto a : seq)
      if (a >= k) throw ParameterError("transition_matrix: cluster " + std::to_string(a) + " >= k = " + std::to_string(k));
    for (std::size_t i = 1; i < seq.size(); ++i) ++t.counts[seq[i]][seq[i - 1]];
  }
  return t;
}

}  // namespace facet::discover
