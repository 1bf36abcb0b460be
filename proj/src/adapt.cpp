#include "axis/adapt.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "axis/rng.hpp"

namespace axis {

std::size_t AdaptState::learnable_count() const {
  std::size_t n = 0;
  for (const auto& [name, layer] : layers) n += layer.lambda.size();
  return n;
}

AdaptState split_learnable(const MergedDelta& merged, double n_fraction) {
  if (!(n_fraction > 0.0) || n_fraction > 1.0) {
    throw Error(ErrorCode::InvalidInput, "n_fraction must be in (0, 1]");
  }
  AdaptState state;
  state.n_fraction = n_fraction;
  state.vector_deltas = merged.vector_deltas;
  for (const auto& [name, factors] : merged.layers) {
    AdaptState::Layer layer;
    layer.u = factors.u;
    layer.v = factors.v;
    const std::size_t width = factors.s.size();
    if (width == 0) {
      state.warnings.push_back("layer " + name +
                               ": empty spectrum, no learnable values");
      state.layers.emplace(name, std::move(layer));
      continue;
    }
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(n_fraction * static_cast<double>(width))));
    const std::size_t take = std::min(n, width);
    layer.lambda.assign(factors.s.begin(), factors.s.begin() + take);
    layer.s_frozen.assign(factors.s.begin() + take, factors.s.end());
    state.layers.emplace(name, std::move(layer));
  }
  return state;
}

ParamSet assemble_weights(const AdaptState& state, const ParamSet& theta_pre) {
  std::map<std::string, Matrix> matrix_deltas;
  for (const auto& [name, layer] : state.layers) {
    std::vector<double> s = layer.lambda;
    s.insert(s.end(), layer.s_frozen.begin(), layer.s_frozen.end());
    matrix_deltas.emplace(name, reconstruct(layer.u, s, layer.v));
  }
  return apply_delta(theta_pre, matrix_deltas, state.vector_deltas, 1.0);
}

std::vector<double> sigma_gradient(const Matrix& u, const Matrix& v,
                                   const Matrix& grad_w, std::size_t n) {
  if (u.cols() != v.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "factor widths differ");
  }
  if (n > u.cols()) {
    throw Error(ErrorCode::InvalidInput,
                "requested gradient count exceeds factor width");
  }
  if (grad_w.rows() != u.rows() || grad_w.cols() != v.rows()) {
    throw Error(ErrorCode::ShapeMismatch,
                "weight gradient shape does not match factors");
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < grad_w.rows(); ++i) {
      const double ui = u(i, j);
      if (ui == 0.0) continue;
      double row = 0.0;
      for (std::size_t c = 0; c < grad_w.cols(); ++c) {
        row += grad_w(i, c) * v(c, j);
      }
      sum += ui * row;
    }
    out[j] = sum;
  }
  return out;
}

TrainResult train(const AdaptState& state, const ParamSet& theta_pre,
                  const MlpSpec& spec, const Dataset& train_data,
                  const Dataset* test_data, const TrainConfig& cfg) {
  if (cfg.epochs < 1 || !(cfg.learning_rate > 0.0) || cfg.batch_size < 1) {
    throw Error(ErrorCode::InvalidInput, "bad training configuration");
  }
  if (train_data.inputs.rows() == 0) {
    throw Error(ErrorCode::EmptyInput, "empty training set");
  }

  TrainResult result;
  result.state = state;
  AdaptState& live = result.state;

  const std::size_t num_samples = train_data.inputs.rows();
  const std::size_t d_in = train_data.inputs.cols();
  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::Xoshiro256 gen(rng::derive_seed(cfg.seed, epoch));
    rng::shuffle(order, gen);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < num_samples; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, num_samples);
      Batch batch;
      batch.inputs = Matrix(stop - start, d_in);
      batch.labels.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t src = order[i];
        for (std::size_t c = 0; c < d_in; ++c) {
          batch.inputs(i - start, c) = train_data.inputs(src, c);
        }
        batch.labels[i - start] = train_data.labels[src];
      }

      const ParamSet assembled = assemble_weights(live, theta_pre);
      const LossGrads lg = loss_and_grads(spec, assembled, batch);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::DivergenceDetected,
                    "non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += lg.loss * static_cast<double>(stop - start);

      for (auto& [name, layer] : live.layers) {
        if (layer.lambda.empty()) continue;
        auto git = lg.grads.find(name);
        if (git == lg.grads.end()) continue;
        const std::vector<double> grad = sigma_gradient(
            layer.u, layer.v, git->second.as_matrix(), layer.lambda.size());
        for (std::size_t j = 0; j < layer.lambda.size(); ++j) {
          layer.lambda[j] -= cfg.learning_rate * grad[j];
        }
      }
    }

    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(num_samples);
    const ParamSet snapshot = assemble_weights(live, theta_pre);
    stats.train_acc = evaluate(spec, snapshot, train_data);
    stats.test_acc = test_data != nullptr
                         ? evaluate(spec, snapshot, *test_data)
                         : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(stats);
  }
  return result;
}

}  // namespace axis
