#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "facet/autodiff/ops.hpp"
#include "facet/error.hpp"

namespace facet::translate {

using ad::Tape;
using ad::Tensor;
using ad::Var;

inline constexpr double kDefaultQ = 0.12;

/// Change-points and the normalized per-chunk frame weights of one clip.
/// weights is c x t; every column sums to one.
struct PartitionPlan {
  std::vector<double> tau;
  Tensor weights;

  std::size_t chunks() const { return weights.rows(); }
  std::size_t frames() const { return weights.cols(); }
  std::vector<double> chunk_weights(std::size_t k) const { return weights.row_values(k); }
};

/// sigma(a, Q) = 1 / (1 + exp(-a / Q)), evaluated without overflow.
inline double soft_step(double a, double q) {
  const double x = a / q;
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline void check_temperature(double q) {
  if (!(q > 0.0) || !std::isfinite(q)) throw ParameterError("partition temperature Q must be > 0, got " + std::to_string(q));
}

inline void check_tau(const std::vector<double>& tau, std::size_t t) {
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (!(tau[k] > 0.0 && tau[k] < static_cast<double>(t))) {
      throw ParameterError("change-point " + std::to_string(k) + " = " + std::to_string(tau[k]) + " outside (0, " +
                           std::to_string(t) + ")");
    }
    if (k > 0 && !(tau[k] > tau[k - 1])) throw ParameterError("change-points must be strictly ascending");
  }
}

/// Soft rectangular pulses for a batch. `tau` is B x (c-1) (ignored when
/// c == 1); returns c tensors of B x t normalized weights. Frame indices are
/// 1-based: chunk 1 covers T < tau_1, chunk c covers T > tau_{c-1}.
inline std::vector<Var> partition_weights(Tape& tape, const Var* tau, std::size_t batch, std::size_t t, std::size_t c,
                                          double q) {
  check_temperature(q);
  if (c == 0) throw ParameterError("chunk count must be >= 1");
  if (c == 1) return {tape.constant(Tensor(ad::Shape{batch, t}, 1.0))};
  if (tau == nullptr || tau->cols() != c - 1 || tau->rows() != batch) {
    throw DimensionError("partition_weights: expected " + std::to_string(batch) + " x " + std::to_string(c - 1) +
                         " change-points");
  }
  Tensor frame_index = Tensor::zeros(batch, t);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < t; ++j) frame_index.at(b, j) = static_cast<double>(j + 1);
  Var index = tape.constant(std::move(frame_index));

  std::vector<Var> taus;
  for (std::size_t k = 0; k + 1 < c; ++k) taus.push_back(ad::broadcast_cols(ad::slice_cols(*tau, k, k + 1), t));
  // rising edge at tau_{k-1}, falling edge at tau_k
  auto falling = [&](std::size_t k) { return ad::sigmoid(ad::scale(ad::sub(taus[k], index), 1.0 / q)); };
  auto rising = [&](std::size_t k) { return ad::sigmoid(ad::scale(ad::sub(index, taus[k]), 1.0 / q)); };

  std::vector<Var> w;
  w.push_back(falling(0));
  for (std::size_t k = 1; k + 1 < c; ++k) w.push_back(ad::minimum(rising(k - 1), falling(k)));
  w.push_back(rising(c - 2));

  Var total = w[0];
  for (std::size_t k = 1; k < c; ++k) total = ad::add(total, w[k]);
  for (Var& wk : w) wk = ad::div(wk, total);
  return w;
}

/// Normalized soft partition of t frames at change-points `tau`.
inline PartitionPlan soft_partition(const std::vector<double>& tau, std::size_t t, double q = kDefaultQ) {
  check_temperature(q);
  if (t == 0) throw ParameterError("clip length must be positive");
  check_tau(tau, t);
  const std::size_t c = tau.size() + 1;
  Tape tape;
  Var tau_var = tape.constant(Tensor::row(tau.empty() ? std::vector<double>{0.0} : tau));
  auto w = partition_weights(tape, c > 1 ? &tau_var : nullptr, 1, t, c, q);
  PartitionPlan plan{tau, Tensor::zeros(c, t)};
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t j = 0; j < t; ++j) plan.weights.at(k, j) = w[k].value()[j];
  return plan;
}

}  // namespace facet::translate
