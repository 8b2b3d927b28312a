#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "facet/autodiff/ops.hpp"
#include "facet/error.hpp"

namespace facet::translate {

inline constexpr double kLogFloor = 1e-7;

struct AdversarialLosses {
  ad::Var d_loss;
  ad::Var g_loss;
};

/// From discriminator outputs on real Y latents and on translated X latents:
/// d_loss = -mean log D(real) - mean log(1 - D(fake)), g_loss = -mean log D(fake).
inline AdversarialLosses adversarial_losses(ad::Var d_real, ad::Var d_fake) {
  if (d_real.value().empty() || d_fake.value().empty() || d_real.rows() == 0 || d_fake.rows() == 0) {
    throw ParameterError("adversarial_losses: empty batch");
  }
  ad::Var real_term = ad::mean(ad::log_clamped(d_real, kLogFloor));
  ad::Var fake_term = ad::mean(ad::log_clamped(ad::add_scalar(ad::scale(d_fake, -1.0), 1.0), kLogFloor));
  ad::Var d_loss = ad::scale(ad::add(real_term, fake_term), -1.0);
  ad::Var g_loss = ad::scale(ad::mean(ad::log_clamped(d_fake, kLogFloor)), -1.0);
  return {d_loss, g_loss};
}

struct LossValues {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

inline LossValues adversarial_losses(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw ParameterError("adversarial_losses: empty batch");
  double real = 0.0, fake_neg = 0.0, fake = 0.0;
  for (double d : d_real) real += std::log(std::max(d, kLogFloor));
  for (double d : d_fake) {
    fake_neg += std::log(std::max(1.0 - d, kLogFloor));
    fake += std::log(std::max(d, kLogFloor));
  }
  const double nr = static_cast<double>(d_real.size()), nf = static_cast<double>(d_fake.size());
  return {-(real / nr + fake_neg / nf), -fake / nf};
}

}  // namespace facet::translate
