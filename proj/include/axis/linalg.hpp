#pragma once

#include <cstddef>
#include <vector>

#include "axis/error.hpp"

namespace axis {

// Dense row-major matrix of 64-bit reals. Disk containers quantize to f32;
// all in-memory arithmetic stays in doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Thin SVD A = U diag(s) V^T with s sorted descending and orthonormal
// columns in U (m x r) and V (n x r).
struct SvdFactors {
  Matrix u;
  std::vector<double> s;
  Matrix v;

  std::size_t rank() const { return s.size(); }
};

struct RankOne {
  std::vector<double> u;
  double sigma = 0.0;
  std::vector<double> v;
};

// One-sided Jacobi SVD. r = number of singular values above
// rank_tol * s_max; rank_tol == 0 keeps the full min(m, n) spectrum
// (zeros included) unless the matrix itself is zero. Sign convention:
// each (u_j, v_j) pair is flipped so the largest-magnitude entry of u_j
// is positive. Ties in s preserve the pre-sort column order.
SvdFactors svd(const Matrix& a, double rank_tol);

double frobenius_norm(const Matrix& a);

// sum_k u_k sigma_k v_k^T with the declared output shape (covers the
// empty-component case).
Matrix rank_one_sum(const std::vector<RankOne>& components, std::size_t rows,
                    std::size_t cols);

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);

// U diag(s) V^T from thin factors.
Matrix reconstruct(const Matrix& u, const std::vector<double>& s,
                   const Matrix& v);

}  // namespace axis
