#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "facet/autodiff/ops.hpp"

namespace facet::ad {

enum class Activation { leaky_relu, sigmoid, softmax, identity };
enum class Mode { train, eval };

inline constexpr double kLeakySlope = 0.01;

struct Layer {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
  Activation activation = Activation::identity;
  double dropout = 0.0;

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }
};

/// Fully connected network. Layer i maps rows of width in_i to width out_i,
/// then applies its activation and, in training mode only, inverted dropout.
struct MlpParams {
  std::vector<Layer> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (const Layer& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (Layer& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  void validate() const {
    if (layers.empty()) throw DimensionError("MLP has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& l = layers[i];
      if (l.bias.value.rows() != 1 || l.bias.value.cols() != l.out_dim()) {
        throw DimensionError("layer " + std::to_string(i) + ": bias width " +
                             std::to_string(l.bias.value.cols()) + " != output width " +
                             std::to_string(l.out_dim()));
      }
      if (i + 1 < layers.size() && l.out_dim() != layers[i + 1].in_dim()) {
        throw DimensionError("layer " + std::to_string(i) + " outputs " + std::to_string(l.out_dim()) +
                             " but layer " + std::to_string(i + 1) + " expects " +
                             std::to_string(layers[i + 1].in_dim()));
      }
      if (l.dropout < 0.0 || l.dropout >= 1.0) {
        throw ParameterError("layer " + std::to_string(i) + ": dropout must lie in [0, 1)");
      }
    }
  }
};

struct LayerSpec {
  std::size_t out = 0;
  Activation activation = Activation::leaky_relu;
  double dropout = 0.0;
};

/// Glorot-uniform weights, zero biases.
inline MlpParams make_mlp(std::size_t in_dim, const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MlpParams p;
  std::size_t fan_in = in_dim;
  for (const LayerSpec& s : specs) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + s.out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor w = Tensor::zeros(fan_in, s.out);
    for (double& v : w.data()) v = u(rng);
    p.layers.push_back(Layer{Parameter{std::move(w)}, Parameter{Tensor::zeros(1, s.out)}, s.activation, s.dropout});
    fan_in = s.out;
  }
  p.validate();
  return p;
}

/// Sets the final layer's weights and biases to zero.
inline void zero_last_layer(MlpParams& p) {
  Layer& l = p.layers.back();
  for (double& v : l.weight.value.data()) v = 0.0;
  for (double& v : l.bias.value.data()) v = 0.0;
  ++l.weight.version;
  ++l.bias.version;
}

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::leaky_relu: return leaky_relu(x, kLeakySlope);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softmax: return softmax_rows(x);
    case Activation::identity: return x;
  }
  return x;
}

/// Records the network on `tape`. Non-finite intermediates are reported with
/// the index of the offending layer.
inline Var mlp_apply(Tape& tape, const MlpParams& params, Var input, Mode mode, std::mt19937_64& rng) {
  if (input.cols() != params.in_dim()) {
    throw DimensionError("MLP input width " + std::to_string(input.cols()) + " != expected " +
                         std::to_string(params.in_dim()));
  }
  Var h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    try {
      h = add_row(matmul(h, tape.parameter(l.weight)), tape.parameter(l.bias));
      h = activate(h, l.activation);
      if (mode == Mode::train && l.dropout > 0.0) h = dropout(h, l.dropout, rng);
    } catch (const NumericError& e) {
      throw NumericError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return h;
}

/// Result of a standalone forward pass; owns its tape.
struct MlpForward {
  std::unique_ptr<Tape> tape;
  Var input;
  Var output;
  std::vector<const Parameter*> params;
};

inline MlpForward mlp_forward(const MlpParams& params, const Tensor& input, Mode mode, std::uint64_t rng_seed) {
  params.validate();
  MlpForward f{std::make_unique<Tape>(), {}, {}, params.parameters()};
  std::mt19937_64 rng(rng_seed);
  f.input = f.tape->variable(input);
  f.output = mlp_apply(*f.tape, params, f.input, mode, rng);
  return f;
}

/// Eval-mode forward without gradient bookkeeping. Uses the same kernels as
/// mlp_apply, so outputs match an eval-mode tape forward bit for bit.
inline Tensor mlp_infer(const MlpParams& params, const Tensor& input) {
  if (input.cols() != params.in_dim()) {
    throw DimensionError("MLP input width " + std::to_string(input.cols()) + " != expected " +
                         std::to_string(params.in_dim()));
  }
  Tape tape;
  Var h = tape.constant(input);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    try {
      h = activate(add_row(matmul(h, tape.constant(l.weight.value)), tape.constant(l.bias.value)), l.activation);
    } catch (const NumericError& e) {
      throw NumericError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return h.value();
}

struct MlpGradients {
  std::vector<Tensor> params;  // weight, bias per layer
  Tensor input;
};

inline MlpGradients backward(MlpForward& f, const Tensor& output_grad) {
  f.tape->backward(f.output, output_grad);
  return MlpGradients{f.tape->gradients(f.params), f.tape->grad(f.input)};
}

}  // namespace facet::ad
