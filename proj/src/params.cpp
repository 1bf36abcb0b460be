#include "axis/params.hpp"

#include <cmath>

namespace axis {

Tensor Tensor::matrix(const Matrix& m) {
  Tensor t;
  t.kind = Kind::MatrixKind;
  t.shape = {m.rows(), m.cols()};
  t.values = m.data();
  return t;
}

Tensor Tensor::vector(std::vector<double> v) {
  Tensor t;
  t.kind = Kind::VectorKind;
  t.shape = {v.size()};
  t.values = std::move(v);
  return t;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Matrix Tensor::as_matrix() const {
  if (kind != Kind::MatrixKind || shape.size() != 2) {
    throw Error(ErrorCode::SchemaMismatch, "tensor is not matrix-kind");
  }
  return Matrix(shape[0], shape[1], values);
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void ParamSet::insert(const std::string& name, Tensor tensor) {
  if (tensor.values.size() != tensor.numel()) {
    throw Error(ErrorCode::ShapeMismatch,
                "tensor value count does not match shape: " + name);
  }
  if (!tensor.all_finite()) {
    throw Error(ErrorCode::InvalidInput, "non-finite tensor: " + name);
  }
  if (!entries_.emplace(name, std::move(tensor)).second) {
    throw Error(ErrorCode::SchemaMismatch, "duplicate layer name: " + name);
  }
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error(ErrorCode::SchemaMismatch, "unknown layer name: " + name);
  }
  return it->second;
}

bool ParamSet::same_schema(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto it = entries_.begin();
  auto jt = other.entries_.begin();
  for (; it != entries_.end(); ++it, ++jt) {
    if (it->first != jt->first || !it->second.same_schema(jt->second)) {
      return false;
    }
  }
  return true;
}

TaskVector task_vector(const ParamSet& theta_ft, const ParamSet& theta_pre,
                       const std::string& source_id) {
  if (!theta_ft.same_schema(theta_pre)) {
    throw Error(ErrorCode::SchemaMismatch,
                "fine-tuned and pre-trained parameter schemas differ");
  }
  TaskVector tv;
  tv.source_id = source_id;
  for (const auto& [name, ft] : theta_ft.entries()) {
    const Tensor& pre = theta_pre.at(name);
    Tensor delta = ft;
    for (std::size_t i = 0; i < delta.values.size(); ++i) {
      delta.values[i] = ft.values[i] - pre.values[i];
    }
    tv.entries.emplace(name, std::move(delta));
  }
  return tv;
}

std::map<std::string, Tensor> average_nonmatrix(
    const std::vector<TaskVector>& task_vectors) {
  if (task_vectors.empty()) {
    throw Error(ErrorCode::EmptyInput, "no task vectors to average");
  }
  const TaskVector& ref = task_vectors.front();
  for (const TaskVector& tv : task_vectors) {
    if (tv.entries.size() != ref.entries.size()) {
      throw Error(ErrorCode::SchemaMismatch, "task vector schemas differ");
    }
  }
  std::map<std::string, Tensor> out;
  for (const auto& [name, tensor] : ref.entries) {
    if (tensor.kind != Kind::VectorKind) continue;
    Tensor mean = tensor;
    std::fill(mean.values.begin(), mean.values.end(), 0.0);
    for (const TaskVector& tv : task_vectors) {
      auto it = tv.entries.find(name);
      if (it == tv.entries.end() || !it->second.same_schema(tensor)) {
        throw Error(ErrorCode::SchemaMismatch,
                    "task vector schemas differ at layer: " + name);
      }
      for (std::size_t i = 0; i < mean.values.size(); ++i) {
        mean.values[i] += it->second.values[i];
      }
    }
    const double inv = 1.0 / static_cast<double>(task_vectors.size());
    for (double& v : mean.values) v *= inv;
    out.emplace(name, std::move(mean));
  }
  return out;
}

ParamSet apply_delta(const ParamSet& theta_pre,
                     const std::map<std::string, Matrix>& matrix_deltas,
                     const std::map<std::string, Tensor>& vector_deltas,
                     double scale) {
  ParamSet out;
  for (const auto& [name, tensor] : theta_pre.entries()) {
    Tensor next = tensor;
    auto mit = matrix_deltas.find(name);
    if (mit != matrix_deltas.end()) {
      if (tensor.kind != Kind::MatrixKind || tensor.shape.size() != 2 ||
          tensor.shape[0] != mit->second.rows() ||
          tensor.shape[1] != mit->second.cols()) {
        throw Error(ErrorCode::SchemaMismatch,
                    "matrix delta shape mismatch at layer: " + name);
      }
      const auto& d = mit->second.data();
      for (std::size_t i = 0; i < next.values.size(); ++i) {
        next.values[i] = tensor.values[i] + scale * d[i];
      }
    }
    auto vit = vector_deltas.find(name);
    if (vit != vector_deltas.end()) {
      if (!tensor.same_schema(vit->second)) {
        throw Error(ErrorCode::SchemaMismatch,
                    "vector delta shape mismatch at layer: " + name);
      }
      for (std::size_t i = 0; i < next.values.size(); ++i) {
        next.values[i] += scale * vit->second.values[i];
      }
    }
    out.insert(name, std::move(next));
  }
  for (const auto& [name, unused] : matrix_deltas) {
    (void)unused;
    if (!theta_pre.contains(name)) {
      throw Error(ErrorCode::SchemaMismatch, "unknown delta layer: " + name);
    }
  }
  for (const auto& [name, unused] : vector_deltas) {
    (void)unused;
    if (!theta_pre.contains(name)) {
      throw Error(ErrorCode::SchemaMismatch, "unknown delta layer: " + name);
    }
  }
  return out;
}

}  // namespace axis
