#include "axis/net.hpp"

#include <cmath>

#include "axis/rng.hpp"

namespace axis {

void MlpSpec::validate() const {
  if (layer_dims.size() < 2) {
    throw Error(ErrorCode::InvalidInput, "mlp needs at least two dims");
  }
  for (std::size_t d : layer_dims) {
    if (d < 1) throw Error(ErrorCode::InvalidInput, "mlp dims must be >= 1");
  }
}

ParamSet MlpSpec::init_params(std::uint64_t seed) const {
  validate();
  ParamSet params;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    rng::Xoshiro256 gen(rng::derive_seed(seed, weight_name(l)));
    Matrix w(fan_in, fan_out);
    for (double& x : w.data()) x = scale * rng::normal(gen);
    params.insert(weight_name(l), Tensor::matrix(w));
    params.insert(bias_name(l), Tensor::vector(std::vector<double>(fan_out, 0.0)));
  }
  return params;
}

namespace {

const Tensor& fetch(const ParamSet& params, const std::string& name, Kind kind,
                    std::size_t d0, std::size_t d1) {
  if (!params.contains(name)) {
    throw Error(ErrorCode::SchemaMismatch, "missing parameter: " + name);
  }
  const Tensor& t = params.at(name);
  const bool ok =
      kind == Kind::MatrixKind
          ? (t.kind == kind && t.shape.size() == 2 && t.shape[0] == d0 &&
             t.shape[1] == d1)
          : (t.kind == kind && t.shape.size() == 1 && t.shape[0] == d0);
  if (!ok) {
    throw Error(ErrorCode::SchemaMismatch, "parameter shape mismatch: " + name);
  }
  return t;
}

void check_batch(const MlpSpec& spec, const Batch& batch) {
  if (batch.inputs.rows() == 0) {
    throw Error(ErrorCode::EmptyInput, "empty batch");
  }
  if (batch.inputs.cols() != spec.input_dim()) {
    throw Error(ErrorCode::SchemaMismatch, "input width does not match d_in");
  }
  if (batch.labels.size() != batch.inputs.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "label count does not match batch");
  }
  for (std::size_t y : batch.labels) {
    if (y >= spec.output_dim()) {
      throw Error(ErrorCode::InvalidInput, "label out of range");
    }
  }
}

}  // namespace

ForwardCache forward(const MlpSpec& spec, const ParamSet& params,
                     const Batch& batch) {
  spec.validate();
  check_batch(spec, batch);

  ForwardCache cache;
  Matrix h = batch.inputs;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t fan_in = spec.layer_dims[l];
    const std::size_t fan_out = spec.layer_dims[l + 1];
    const Tensor& w =
        fetch(params, spec.weight_name(l), Kind::MatrixKind, fan_in, fan_out);
    const Tensor& b =
        fetch(params, spec.bias_name(l), Kind::VectorKind, fan_out, 0);

    cache.layer_inputs.push_back(h);
    Matrix z(h.rows(), fan_out);
    for (std::size_t i = 0; i < h.rows(); ++i) {
      for (std::size_t j = 0; j < fan_out; ++j) z(i, j) = b.values[j];
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double hik = h(i, k);
        if (hik == 0.0) continue;
        const double* wrow = w.values.data() + k * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) z(i, j) += hik * wrow[j];
      }
    }
    cache.preacts.push_back(z);
    if (l + 1 < spec.num_layers()) {
      h = z;
      for (double& x : h.data()) x = x > 0.0 ? x : 0.0;  // ReLU, 0 at 0
    } else {
      h = z;
    }
  }
  cache.logits = h;
  return cache;
}

LossGrads loss_and_grads(const MlpSpec& spec, const ParamSet& params,
                         const Batch& batch) {
  const ForwardCache cache = forward(spec, params, batch);
  const std::size_t batch_size = batch.inputs.rows();
  const std::size_t classes = spec.output_dim();

  // Mean cross-entropy via log-sum-exp; dL/dlogits = (softmax - onehot)/B.
  double loss = 0.0;
  Matrix dlogits(batch_size, classes);
  for (std::size_t i = 0; i < batch_size; ++i) {
    double max_logit = cache.logits(i, 0);
    for (std::size_t j = 1; j < classes; ++j) {
      max_logit = std::max(max_logit, cache.logits(i, j));
    }
    double sum_exp = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      sum_exp += std::exp(cache.logits(i, j) - max_logit);
    }
    const double lse = max_logit + std::log(sum_exp);
    loss += lse - cache.logits(i, batch.labels[i]);
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = std::exp(cache.logits(i, j) - lse);
      dlogits(i, j) =
          (p - (j == batch.labels[i] ? 1.0 : 0.0)) / static_cast<double>(batch_size);
    }
  }
  loss /= static_cast<double>(batch_size);

  LossGrads out;
  out.loss = loss;
  Matrix delta = dlogits;
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const Matrix& input = cache.layer_inputs[l];
    const std::size_t fan_in = spec.layer_dims[l];
    const std::size_t fan_out = spec.layer_dims[l + 1];

    Matrix dw(fan_in, fan_out);
    for (std::size_t i = 0; i < input.rows(); ++i) {
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double x = input(i, k);
        if (x == 0.0) continue;
        for (std::size_t j = 0; j < fan_out; ++j) dw(k, j) += x * delta(i, j);
      }
    }
    std::vector<double> db(fan_out, 0.0);
    for (std::size_t i = 0; i < input.rows(); ++i) {
      for (std::size_t j = 0; j < fan_out; ++j) db[j] += delta(i, j);
    }
    out.grads.emplace(spec.weight_name(l), Tensor::matrix(dw));
    out.grads.emplace(spec.bias_name(l), Tensor::vector(std::move(db)));

    if (l > 0) {
      const Tensor& w = params.at(spec.weight_name(l));
      Matrix prev(input.rows(), fan_in);
      for (std::size_t i = 0; i < input.rows(); ++i) {
        for (std::size_t j = 0; j < fan_out; ++j) {
          const double d = delta(i, j);
          if (d == 0.0) continue;
          for (std::size_t k = 0; k < fan_in; ++k) {
            prev(i, k) += d * w.values[k * fan_out + j];
          }
        }
      }
      const Matrix& z_prev = cache.preacts[l - 1];
      for (std::size_t i = 0; i < prev.rows(); ++i) {
        for (std::size_t k = 0; k < fan_in; ++k) {
          if (z_prev(i, k) <= 0.0) prev(i, k) = 0.0;
        }
      }
      delta = std::move(prev);
    }
  }
  return out;
}

double evaluate(const MlpSpec& spec, const ParamSet& params,
                const Dataset& dataset) {
  if (dataset.inputs.rows() == 0) {
    throw Error(ErrorCode::EmptyInput, "empty dataset");
  }
  const ForwardCache cache = forward(spec, params, dataset);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.inputs.rows(); ++i) {
    std::size_t arg = 0;
    double best = cache.logits(i, 0);
    for (std::size_t j = 1; j < spec.output_dim(); ++j) {
      if (cache.logits(i, j) > best) {
        best = cache.logits(i, j);
        arg = j;
      }
    }
    if (arg == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.inputs.rows());
}

}  // namespace axis
