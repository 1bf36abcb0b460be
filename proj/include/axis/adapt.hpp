#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "axis/merge.hpp"
#include "axis/net.hpp"

namespace axis {

// Per-layer frozen bases plus the learnable top-N singular values.
struct AdaptState {
  struct Layer {
    Matrix u;                       // frozen
    Matrix v;                       // frozen
    std::vector<double> lambda;     // learnable, initially the N largest
    std::vector<double> s_frozen;   // frozen tail
  };
  std::map<std::string, Layer> layers;
  std::map<std::string, Tensor> vector_deltas;  // frozen
  double n_fraction = 0.0;
  std::vector<std::string> warnings;

  std::size_t learnable_count() const;
};

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Splits each layer's spectrum into lambda (the N = max(1,
// round(n_fraction * width)) largest values) and a frozen tail.
AdaptState split_learnable(const MergedDelta& merged, double n_fraction);

// theta_pre + U diag(lambda, s_frozen) V^T per matrix layer, plus the
// frozen vector deltas. Pure function of its arguments.
ParamSet assemble_weights(const AdaptState& state, const ParamSet& theta_pre);

// Chain rule through W = theta_pre + U diag(s) V^T:
// dL/ds_j = u_j^T grad_w v_j, returned for j = 1..n only.
std::vector<double> sigma_gradient(const Matrix& u, const Matrix& v,
                                   const Matrix& grad_w, std::size_t n);

struct EpochStats {
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;  // NaN when no test set is supplied
};

struct TrainResult {
  AdaptState state;
  std::vector<EpochStats> history;
};

// Plain SGD on lambda only; batches are drawn by a seeded shuffle each
// epoch. Everything except lambda is byte-identical before and after.
TrainResult train(const AdaptState& state, const ParamSet& theta_pre,
                  const MlpSpec& spec, const Dataset& train_data,
                  const Dataset* test_data, const TrainConfig& cfg);

}  // namespace axis
