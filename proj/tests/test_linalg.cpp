#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "axis/linalg.hpp"
#include "oracles.hpp"

using axis::Matrix;
using axis::RankOne;
using axis::SvdFactors;

TEST_CASE("svd of the identity") {
  const SvdFactors f = axis::svd(Matrix::identity(2), 0.0);
  REQUIRE(f.rank() == 2);
  CHECK(f.s[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.s[1] == doctest::Approx(1.0).epsilon(1e-12));
  const Matrix uvt = axis::matmul(f.u, axis::transpose(f.v));
  CHECK(oracle::frob_distance(uvt, Matrix::identity(2)) < 1e-12);
}

TEST_CASE("svd of the zero matrix has empty factors") {
  const SvdFactors f = axis::svd(Matrix(3, 3), 1e-12);
  CHECK(f.rank() == 0);
  CHECK(f.u.rows() == 3);
  CHECK(f.u.cols() == 0);
  CHECK(f.v.cols() == 0);
}

TEST_CASE("svd sorts the diagonal case") {
  Matrix a(3, 3);
  a(0, 0) = 3.0;
  a(1, 1) = 1.0;
  a(2, 2) = 2.0;
  const SvdFactors f = axis::svd(a, 0.0);
  REQUIRE(f.rank() == 3);
  CHECK(f.s[0] == doctest::Approx(3.0));
  CHECK(f.s[1] == doctest::Approx(2.0));
  CHECK(f.s[2] == doctest::Approx(1.0));
}

TEST_CASE("svd spectrum matches the gram-matrix eigen oracle") {
  const Matrix a = oracle::random_matrix(5, 4, 101);
  const SvdFactors f = axis::svd(a, 0.0);
  const std::vector<double> expected = oracle::svd_spectrum(a);
  REQUIRE(f.rank() == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(std::abs(f.s[j] - expected[j]) < 1e-6);
  }
}

TEST_CASE("svd contract on seeded random matrices") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    axis::rng::Xoshiro256 gen(seed * 7919 + 13);
    const std::size_t rows = 1 + axis::rng::uniform_below(gen, 16);
    const std::size_t cols = 1 + axis::rng::uniform_below(gen, 12);
    const Matrix a = oracle::random_matrix(rows, cols, seed + 5000);
    const SvdFactors f = axis::svd(a, 0.0);

    for (std::size_t j = 0; j + 1 < f.rank(); ++j) {
      CHECK(f.s[j] >= f.s[j + 1]);
    }
    CHECK(oracle::max_abs_offdiag_identity(f.u) < 1e-8);
    CHECK(oracle::max_abs_offdiag_identity(f.v) < 1e-8);
    const Matrix rebuilt = axis::reconstruct(f.u, f.s, f.v);
    const double rel = oracle::frob_distance(rebuilt, a) /
                       std::max(1.0, axis::frobenius_norm(a));
    CHECK(rel < 1e-8);
  }
}

TEST_CASE("svd keeps the full spectrum at rank_tol zero") {
  // Structurally rank-2 matrix: the zero direction stays in the factors.
  Matrix a(3, 3);
  a(0, 0) = 2.0;
  a(1, 1) = 1.0;
  const SvdFactors f = axis::svd(a, 0.0);
  REQUIRE(f.rank() == 3);
  CHECK(f.s[2] == doctest::Approx(0.0));
  CHECK(oracle::max_abs_offdiag_identity(f.u) < 1e-8);
  CHECK(oracle::max_abs_offdiag_identity(f.v) < 1e-8);
}

TEST_CASE("svd rank truncation") {
  Matrix a(4, 4);
  a(0, 0) = 10.0;
  a(1, 1) = 5.0;
  a(2, 2) = 1e-9;
  const SvdFactors f = axis::svd(a, 1e-6);
  CHECK(f.rank() == 2);
}

TEST_CASE("svd is deterministic including signs") {
  const Matrix a = oracle::random_matrix(6, 5, 77);
  const SvdFactors f1 = axis::svd(a, 0.0);
  const SvdFactors f2 = axis::svd(a, 0.0);
  CHECK(f1.u.data() == f2.u.data());
  CHECK(f1.s == f2.s);
  CHECK(f1.v.data() == f2.v.data());
  for (std::size_t j = 0; j < f1.rank(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < f1.u.rows(); ++i) {
      if (std::abs(f1.u(i, j)) > best) {
        best = std::abs(f1.u(i, j));
        arg = i;
      }
    }
    CHECK(f1.u(arg, j) > 0.0);
  }
}

TEST_CASE("svd rejects non-finite input") {
  Matrix a(2, 2);
  a(0, 1) = std::nan("");
  CHECK_THROWS_AS(axis::svd(a, 0.0), axis::Error);
  try {
    axis::svd(a, 0.0);
  } catch (const axis::Error& e) {
    CHECK(e.code() == axis::ErrorCode::InvalidInput);
  }
}

TEST_CASE("frobenius norm") {
  CHECK(axis::frobenius_norm(Matrix(3, 2)) == 0.0);
  Matrix a(1, 2);
  a(0, 0) = 3.0;
  a(0, 1) = 4.0;
  CHECK(axis::frobenius_norm(a) == doctest::Approx(5.0));

  const Matrix r = oracle::random_matrix(4, 4, 11);
  double sum = 0.0;
  for (double v : r.data()) sum += v * v;
  CHECK(axis::frobenius_norm(r) == doctest::Approx(std::sqrt(sum)).epsilon(1e-14));
}

TEST_CASE("rank_one_sum basics") {
  CHECK(oracle::frob_distance(axis::rank_one_sum({}, 2, 2), Matrix(2, 2)) == 0.0);

  RankOne c;
  c.u = {1.0, 0.0};
  c.sigma = 2.0;
  c.v = {1.0, 0.0};
  const Matrix m = axis::rank_one_sum({c}, 2, 2);
  CHECK(m(0, 0) == 2.0);
  CHECK(m(0, 1) == 0.0);
  CHECK(m(1, 0) == 0.0);
  CHECK(m(1, 1) == 0.0);

  RankOne bad;
  bad.u = {1.0, 0.0, 0.0};
  bad.sigma = 1.0;
  bad.v = {1.0};
  CHECK_THROWS_AS(axis::rank_one_sum({bad}, 2, 2), axis::Error);
}

TEST_CASE("rank-one round trip rebuilds the decomposed matrix") {
  const Matrix a = oracle::random_matrix(7, 5, 303);
  const SvdFactors f = axis::svd(a, 0.0);
  std::vector<RankOne> comps;
  for (std::size_t j = 0; j < f.rank(); ++j) {
    RankOne c;
    c.sigma = f.s[j];
    c.u.resize(f.u.rows());
    for (std::size_t i = 0; i < f.u.rows(); ++i) c.u[i] = f.u(i, j);
    c.v.resize(f.v.rows());
    for (std::size_t i = 0; i < f.v.rows(); ++i) c.v[i] = f.v(i, j);
    comps.push_back(std::move(c));
  }
  const Matrix rebuilt = axis::rank_one_sum(comps, a.rows(), a.cols());
  CHECK(oracle::frob_distance(rebuilt, a) / axis::frobenius_norm(a) < 1e-8);
}

TEST_CASE("wide matrices decompose through the transposed path") {
  const Matrix a = oracle::random_matrix(3, 9, 404);
  const SvdFactors f = axis::svd(a, 0.0);
  REQUIRE(f.rank() == 3);
  CHECK(f.u.rows() == 3);
  CHECK(f.v.rows() == 9);
  const Matrix rebuilt = axis::reconstruct(f.u, f.s, f.v);
  CHECK(oracle::frob_distance(rebuilt, a) / axis::frobenius_norm(a) < 1e-8);
}
