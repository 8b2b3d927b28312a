#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "facet/autodiff/mlp.hpp"

namespace facet::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments for an ordered list of parameters. Moments are allocated
/// (zeroed) on the first step, sized after the parameters passed in.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const noexcept { return cfg_; }
  AdamConfig& config() noexcept { return cfg_; }
  std::uint64_t step_count() const noexcept { return step_; }
  const std::vector<Tensor>& first_moment() const noexcept { return m_; }
  const std::vector<Tensor>& second_moment() const noexcept { return v_; }

  void step(std::span<Parameter* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) {
      throw DimensionError("adam: " + std::to_string(grads.size()) + " gradients for " +
                           std::to_string(params.size()) + " parameters");
    }
    if (m_.empty()) {
      for (const Parameter* p : params) {
        m_.push_back(Tensor::zeros_like(p->value));
        v_.push_back(Tensor::zeros_like(p->value));
      }
    } else if (m_.size() != params.size()) {
      throw DimensionError("adam: parameter list changed size between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->value.shape() != grads[i].shape() || m_[i].shape() != grads[i].shape()) {
        throw DimensionError("adam: gradient " + std::to_string(i) + " has shape " +
                             shape_string(grads[i].shape()) + ", parameter has " +
                             shape_string(params[i]->value.shape()));
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m = m_[i].matrix().array();
      auto v = v_[i].matrix().array();
      const auto g = grads[i].matrix().array();
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
      params[i]->value.matrix().array() -= cfg_.lr * (m / bc1) / ((v / bc2).sqrt() + cfg_.epsilon);
      params[i]->value.require_finite("adam update");
      ++params[i]->version;
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

inline void adam_step(MlpParams& params, std::span<const Tensor> grads, AdamState& state) {
  auto ps = params.parameters();
  state.step(ps, grads);
}

}  // namespace facet::ad
