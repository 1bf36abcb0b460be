#pragma once

#include <map>
#include <string>
#include <vector>

#include "axis/linalg.hpp"

namespace axis {

// Layer kind is declared, never inferred from shape: a 1 x n matrix is
// still MatrixKind and a length-n bias is VectorKind.
enum class Kind { MatrixKind, VectorKind };

struct Tensor {
  Kind kind = Kind::VectorKind;
  std::vector<std::size_t> shape;  // {rows, cols} or {len}
  std::vector<double> values;      // row-major

  static Tensor matrix(const Matrix& m);
  static Tensor vector(std::vector<double> v);

  std::size_t numel() const;
  Matrix as_matrix() const;
  bool same_schema(const Tensor& other) const {
    return kind == other.kind && shape == other.shape;
  }
  bool all_finite() const;
};

// Ordered (lexicographic) map of named tensors; immutable by convention
// after construction.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void insert(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const {
    return entries_.count(name) > 0;
  }
  const Tensor& at(const std::string& name) const;

  const Map& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool same_schema(const ParamSet& other) const;

 private:
  Map entries_;
};

struct TaskVector {
  std::string source_id;
  std::map<std::string, Tensor> entries;
};

// theta_ft - theta_pre, elementwise, over identical schemas.
TaskVector task_vector(const ParamSet& theta_ft, const ParamSet& theta_pre,
                       const std::string& source_id);

// Mean of the VectorKind entries across sources; MatrixKind layers are
// absent from the result.
std::map<std::string, Tensor> average_nonmatrix(
    const std::vector<TaskVector>& task_vectors);

// theta_pre + scale * delta per named layer; layers without a delta pass
// through untouched.
ParamSet apply_delta(const ParamSet& theta_pre,
                     const std::map<std::string, Matrix>& matrix_deltas,
                     const std::map<std::string, Tensor>& vector_deltas,
                     double scale);

}  // namespace axis
