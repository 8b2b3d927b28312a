#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "facet/autodiff/mlp.hpp"
#include "facet/autodiff/tape.hpp"

namespace facet::ad {

inline double relative_gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace detail {

inline double probe(double value, const char* where) {
  if (!std::isfinite(value)) throw NumericError(std::string("grad_check: non-finite objective at ") + where);
  return value;
}

// Fourth-order central difference: truncation O(eps^4), so eps can stay
// large enough that rounding in f does not swamp small gradient entries.
template <class Eval>
double central_difference(Eval&& at, double x, double eps) {
  return (at(x - 2.0 * eps) - 8.0 * at(x - eps) + 8.0 * at(x + eps) - at(x + 2.0 * eps)) / (12.0 * eps);
}

}  // namespace detail

/// Max relative error between the tape gradient of `f` at `point` and a
/// five-point finite-difference estimate of step eps. `f(tape, x)` must
/// record a scalar and be deterministic.
template <class F>
double grad_check(F&& f, const Tensor& point, double eps) {
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = f(tape, x);
    detail::probe(y.value().item(), "point");
    tape.backward(y);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor& p) {
    Tape tape;
    Var x = tape.constant(p);
    return detail::probe(f(tape, x).value().item(), "probe");
  };
  double worst = 0.0;
  Tensor probe_point = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double numeric = detail::central_difference(
        [&](double x) {
          probe_point[i] = x;
          return eval(probe_point);
        },
        point[i], eps);
    probe_point[i] = point[i];
    worst = std::max(worst, relative_gradient_error(analytic[i], numeric));
  }
  return worst;
}

/// Same check over every entry of a set of parameters. `f(tape)` records a
/// scalar loss that reads the parameters through tape.parameter(). Parameters
/// are restored bit-exactly afterwards.
template <class F>
double grad_check_params(F&& f, std::span<Parameter* const> params, double eps) {
  std::vector<const Parameter*> cparams(params.begin(), params.end());
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var y = f(tape);
    detail::probe(y.value().item(), "point");
    tape.backward(y);
    analytic = tape.gradients(cparams);
  }
  auto eval = [&]() {
    Tape tape;
    return detail::probe(f(tape).value().item(), "probe");
  };
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& v = params[p]->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      const double numeric = detail::central_difference(
          [&](double x) {
            v[i] = x;
            return eval();
          },
          orig, eps);
      v[i] = orig;
      worst = std::max(worst, relative_gradient_error(analytic[p][i], numeric));
    }
  }
  return worst;
}

/// Smallest |pre-activation| over every leaky-ReLU unit of `params` on
/// `input`. Central differences are only meaningful when this exceeds 2 eps.
inline double min_kink_distance(const MlpParams& params, const Tensor& input) {
  double best = std::numeric_limits<double>::infinity();
  Tape tape;
  Var h = tape.constant(input);
  for (const Layer& l : params.layers) {
    Var pre = add_row(matmul(h, tape.constant(l.weight.value)), tape.constant(l.bias.value));
    if (l.activation == Activation::leaky_relu)
      for (double v : pre.value().data()) best = std::min(best, std::abs(v));
    h = activate(pre, l.activation);
  }
  return best;
}

}  // namespace facet::ad
