#include "axis/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace axis {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::ShapeMismatch,
                "matrix data length does not match rows x cols");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double frobenius_norm(const Matrix& a) {
  if (!a.all_finite()) {
    throw Error(ErrorCode::InvalidInput, "non-finite matrix entries");
  }
  double sum = 0.0;
  for (double v : a.data()) sum += v * v;
  return std::sqrt(sum);
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  }
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions differ");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

Matrix reconstruct(const Matrix& u, const std::vector<double>& s,
                   const Matrix& v) {
  if (u.cols() != s.size() || v.cols() != s.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "factor widths do not match singular value count");
  }
  Matrix out(u.rows(), v.rows());
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double sk = s[k];
    for (std::size_t i = 0; i < u.rows(); ++i) {
      const double uik = u(i, k) * sk;
      if (uik == 0.0) continue;
      for (std::size_t j = 0; j < v.rows(); ++j) {
        out(i, j) += uik * v(j, k);
      }
    }
  }
  return out;
}

Matrix rank_one_sum(const std::vector<RankOne>& components, std::size_t rows,
                    std::size_t cols) {
  Matrix out(rows, cols);
  for (const RankOne& c : components) {
    if (c.u.size() != rows || c.v.size() != cols) {
      throw Error(ErrorCode::ShapeMismatch,
                  "rank-one component length does not match target shape");
    }
    for (std::size_t i = 0; i < rows; ++i) {
      const double ui = c.u[i] * c.sigma;
      if (ui == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) {
        out(i, j) += ui * c.v[j];
      }
    }
  }
  return out;
}

namespace {

// Column-major workspace for the Hestenes one-sided Jacobi sweep.
struct JacobiWork {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> g;     // m x n, columns of the working matrix
  std::vector<double> vacc;  // n x n, accumulated right rotations

  double dot(std::size_t p, std::size_t q) const {
    const double* cp = g.data() + p * m;
    const double* cq = g.data() + q * m;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += cp[i] * cq[i];
    return sum;
  }

  void rotate(std::vector<double>& buf, std::size_t len, std::size_t p,
              std::size_t q, double c, double s) {
    double* cp = buf.data() + p * len;
    double* cq = buf.data() + q * len;
    for (std::size_t i = 0; i < len; ++i) {
      const double gp = cp[i];
      const double gq = cq[i];
      cp[i] = c * gp - s * gq;
      cq[i] = s * gp + c * gq;
    }
  }
};

constexpr double kJacobiTol = 1e-15;
constexpr int kMaxSweeps = 100;

// Orthonormal completion for columns whose singular value is exactly
// zero (only reachable with rank_tol == 0 on rank-deficient input).
void complete_column(Matrix& u, std::size_t col) {
  const std::size_t m = u.rows();
  for (std::size_t cand = 0; cand < m; ++cand) {
    std::vector<double> w(m, 0.0);
    w[cand] = 1.0;
    for (std::size_t k = 0; k < col; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < m; ++i) proj += u(i, k) * w[i];
      for (std::size_t i = 0; i < m; ++i) w[i] -= proj * u(i, k);
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.5) {
      for (std::size_t i = 0; i < m; ++i) u(i, col) = w[i] / norm;
      return;
    }
  }
  throw Error(ErrorCode::InvalidInput, "orthonormal completion failed");
}

}  // namespace

SvdFactors svd(const Matrix& a, double rank_tol) {
  if (!a.all_finite()) {
    throw Error(ErrorCode::InvalidInput, "svd input has non-finite entries");
  }
  if (!(rank_tol >= 0.0) || !std::isfinite(rank_tol)) {
    throw Error(ErrorCode::InvalidInput, "rank_tol must be finite and >= 0");
  }

  const bool flipped = a.rows() < a.cols();
  const Matrix work = flipped ? transpose(a) : a;
  const std::size_t m = work.rows();
  const std::size_t n = work.cols();

  JacobiWork jw;
  jw.m = m;
  jw.n = n;
  jw.g.assign(m * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) jw.g[c * m + r] = work(r, c);
  }
  jw.vacc.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) jw.vacc[i * n + i] = 1.0;

  for (int sweep = 0; sweep < kMaxSweeps && n > 1; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = jw.dot(p, q);
        if (apq == 0.0) continue;
        const double app = jw.dot(p, p);
        const double aqq = jw.dot(q, q);
        if (std::abs(apq) <= kJacobiTol * std::sqrt(app * aqq)) continue;

        const double tau = (aqq - app) / (2.0 * apq);
        const double t =
            (tau >= 0.0 ? 1.0 : -1.0) /
            (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        jw.rotate(jw.g, m, p, q, c, s);
        jw.rotate(jw.vacc, n, p, q, c, s);
        rotated = true;
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    sigma[j] = std::sqrt(jw.dot(j, j));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return sigma[x] > sigma[y];
  });

  const double s_max = n > 0 ? sigma[order[0]] : 0.0;
  std::size_t keep = 0;
  if (s_max > 0.0) {
    if (rank_tol == 0.0) {
      keep = n;
    } else {
      const double cutoff = rank_tol * s_max;
      while (keep < n && sigma[order[keep]] > cutoff) ++keep;
    }
  }

  SvdFactors out;
  out.u = Matrix(m, keep);
  out.v = Matrix(n, keep);
  out.s.resize(keep);
  for (std::size_t j = 0; j < keep; ++j) {
    const std::size_t src = order[j];
    out.s[j] = sigma[src];
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = jw.vacc[src * n + i];
    if (sigma[src] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) {
        out.u(i, j) = jw.g[src * m + i] / sigma[src];
      }
    } else {
      complete_column(out.u, j);
    }
  }

  if (flipped) std::swap(out.u, out.v);

  // Deterministic sign: largest-magnitude entry of each u column positive.
  for (std::size_t j = 0; j < keep; ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < out.u.rows(); ++i) {
      const double mag = std::abs(out.u(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (out.u(arg, j) < 0.0) {
      for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, j) = -out.u(i, j);
      for (std::size_t i = 0; i < out.v.rows(); ++i) out.v(i, j) = -out.v(i, j);
    }
  }

  return out;
}

}  // namespace axis
