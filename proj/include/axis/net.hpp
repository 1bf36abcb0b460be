#pragma once

#include <map>
#include <string>
#include <vector>

#include "axis/params.hpp"

namespace axis {

// Fully-connected classifier: hidden layers use ReLU, the output layer is
// linear, the loss is softmax cross-entropy. Weight for layer i is
// d_i x d_{i+1} under the name "layerI.weight"; bias is "layerI.bias".
struct MlpSpec {
  std::vector<std::size_t> layer_dims;

  std::size_t num_layers() const { return layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  std::string weight_name(std::size_t layer) const {
    return "layer" + std::to_string(layer) + ".weight";
  }
  std::string bias_name(std::size_t layer) const {
    return "layer" + std::to_string(layer) + ".bias";
  }

  void validate() const;

  // Seeded He-initialized parameters matching the naming scheme.
  ParamSet init_params(std::uint64_t seed) const;
};

struct Batch {
  Matrix inputs;                   // batch x d_in
  std::vector<std::size_t> labels;  // < d_out
};

using Dataset = Batch;

struct ForwardCache {
  Matrix logits;                    // batch x d_out
  std::vector<Matrix> layer_inputs; // activation entering each layer
  std::vector<Matrix> preacts;      // pre-activation of each layer
};

ForwardCache forward(const MlpSpec& spec, const ParamSet& params,
                     const Batch& batch);

struct LossGrads {
  double loss = 0.0;
  std::map<std::string, Tensor> grads;  // per weight matrix and bias
};

// Mean softmax cross-entropy over the batch plus exact gradients,
// computed with the log-sum-exp stabilized form.
LossGrads loss_and_grads(const MlpSpec& spec, const ParamSet& params,
                         const Batch& batch);

// Top-1 accuracy; logit ties resolve to the lowest class index.
double evaluate(const MlpSpec& spec, const ParamSet& params,
                const Dataset& dataset);

}  // namespace axis
