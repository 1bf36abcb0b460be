#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "axis/calibrate.hpp"
#include "oracles.hpp"

using axis::Matrix;
using axis::MergedDelta;
using axis::ParamSet;
using axis::Tensor;

namespace {

MergedDelta diagonal_merged(const std::vector<double>& s, std::size_t n) {
  MergedDelta merged;
  MergedDelta::LayerFactors f;
  f.u = Matrix(n, s.size());
  f.v = Matrix(n, s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    f.u(j, j) = 1.0;
    f.v(j, j) = 1.0;
  }
  f.s = s;
  merged.layers.emplace("w", std::move(f));
  return merged;
}

ParamSet diagonal_pre(const std::vector<double>& diag) {
  Matrix w(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) w(i, i) = diag[i];
  ParamSet pre;
  pre.insert("w", Tensor::matrix(w));
  return pre;
}

}  // namespace

TEST_CASE("spectral_rescale applies the direct ratio") {
  const MergedDelta merged = diagonal_merged({4.0, 2.0}, 2);
  const ParamSet pre = diagonal_pre({8.0, 1.0});
  const auto result = axis::spectral_rescale(merged, pre);
  CHECK(result.gamma.at("w") == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(result.merged.layers.at("w").s[0] == doctest::Approx(1.0));
  CHECK(result.merged.layers.at("w").s[1] == doctest::Approx(0.5));
}

TEST_CASE("rescaling the pre-trained layer itself gives the inverse condition number") {
  const ParamSet pre = diagonal_pre({5.0, 3.0, 2.0});
  const MergedDelta merged = diagonal_merged({5.0, 3.0, 2.0}, 3);
  const auto result = axis::spectral_rescale(merged, pre);
  CHECK(result.gamma.at("w") == doctest::Approx(2.0 / 5.0).epsilon(1e-14));
}

TEST_CASE("rescale post-condition on seeded layers") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix w = oracle::random_matrix(8, 6, 100 + seed);
    ParamSet pre;
    pre.insert("w", Tensor::matrix(w));

    const Matrix d = oracle::random_matrix(8, 6, 200 + seed, 3.0);
    const auto f = axis::svd(d, 1e-12);
    MergedDelta merged;
    merged.layers.emplace("w", MergedDelta::LayerFactors{f.u, f.s, f.v});

    const auto result = axis::spectral_rescale(merged, pre);
    const auto pre_spec = oracle::svd_spectrum(w);
    double pre_min = pre_spec.front();
    for (double s : pre_spec) {
      if (s > 1e-10 * pre_spec.front()) pre_min = s;
    }
    CHECK(result.merged.layers.at("w").s.front() <= pre_min + 1e-8);

    // Only singular values change.
    CHECK(result.merged.layers.at("w").u.data() ==
          merged.layers.at("w").u.data());
    CHECK(result.merged.layers.at("w").v.data() ==
          merged.layers.at("w").v.data());
  }
}

TEST_CASE("gamma scales linearly with the merged spectrum") {
  const Matrix w = oracle::random_matrix(6, 6, 300);
  ParamSet pre;
  pre.insert("w", Tensor::matrix(w));
  const auto f = axis::svd(oracle::random_matrix(6, 6, 301), 1e-12);
  MergedDelta merged;
  merged.layers.emplace("w", MergedDelta::LayerFactors{f.u, f.s, f.v});

  MergedDelta doubled = merged;
  for (double& s : doubled.layers.at("w").s) s *= 2.0;

  const auto a = axis::spectral_rescale(merged, pre);
  const auto b = axis::spectral_rescale(doubled, pre);
  CHECK(b.gamma.at("w") == a.gamma.at("w") / 2.0);
  CHECK(a.merged.layers.at("w").s == b.merged.layers.at("w").s);
}

TEST_CASE("zero merged layers are skipped, zero pre-trained layers are errors") {
  MergedDelta empty;
  empty.layers.emplace("w",
                       MergedDelta::LayerFactors{Matrix(4, 0), {}, Matrix(4, 0)});
  const ParamSet pre = diagonal_pre({1.0, 1.0, 1.0, 1.0});
  const auto result = axis::spectral_rescale(empty, pre);
  CHECK(result.gamma.count("w") == 0);
  CHECK(!result.warnings.empty());

  const MergedDelta merged = diagonal_merged({1.0}, 2);
  ParamSet zero_pre;
  zero_pre.insert("w", Tensor::matrix(Matrix(2, 2)));
  CHECK_THROWS_AS(axis::spectral_rescale(merged, zero_pre), axis::Error);
  try {
    axis::spectral_rescale(merged, zero_pre);
  } catch (const axis::Error& e) {
    CHECK(e.code() == axis::ErrorCode::DegenerateLayer);
  }

  ParamSet unrelated;
  unrelated.insert("other", Tensor::matrix(Matrix(2, 2)));
  CHECK_THROWS_AS(axis::spectral_rescale(merged, unrelated), axis::Error);
}

TEST_CASE("interpolate_eval hits the baseline exactly at alpha zero") {
  const ParamSet pre = diagonal_pre({2.0, 1.0});
  const MergedDelta merged = diagonal_merged({0.5}, 2);

  // Deterministic synthetic evaluator: a pure function of the weights.
  const axis::Evaluator evaluator = [](const ParamSet& p) {
    double sum = 0.0;
    for (const auto& [name, tensor] : p.entries()) {
      for (double v : tensor.values) sum += v;
    }
    return sum;
  };

  const auto report =
      axis::interpolate_eval(pre, merged, {0.0, 0.6, 1.0}, evaluator);
  REQUIRE(report.alphas.size() == 3);
  REQUIRE(report.accuracies.size() == 3);
  CHECK(report.accuracies[0] == evaluator(pre));
  CHECK(report.accuracies[2] == doctest::Approx(evaluator(pre) + 0.5));
}

TEST_CASE("interpolate_eval validates the grid and propagates failures") {
  const ParamSet pre = diagonal_pre({1.0});
  const MergedDelta merged = diagonal_merged({0.1}, 1);
  const axis::Evaluator ok = [](const ParamSet&) { return 0.5; };
  CHECK_THROWS_AS(axis::interpolate_eval(pre, merged, {0.5, 0.5}, ok),
                  axis::Error);
  CHECK_THROWS_AS(axis::interpolate_eval(pre, merged, {-0.1}, ok), axis::Error);
  CHECK_THROWS_AS(axis::interpolate_eval(pre, merged, {0.0, 1.5}, ok),
                  axis::Error);

  const axis::Evaluator failing = [](const ParamSet&) -> double {
    throw axis::Error(axis::ErrorCode::EmptyInput, "no data");
  };
  try {
    axis::interpolate_eval(pre, merged, {0.0, 0.6}, failing);
    CHECK(false);
  } catch (const axis::Error& e) {
    CHECK(std::string(e.what()).find("0.0") != std::string::npos);
  }
}

TEST_CASE("calibration csv serialization") {
  axis::CalibrationReport report;
  report.alphas = {0.0, 0.5};
  report.accuracies = {0.25, 0.75};
  report.gamma["layer0.weight"] = 0.125;
  report.gamma["layer1.weight"] = 2.0;
  const std::string dir = "calib_csv_test";
  axis::write_calibration_csv(report, dir + ".csv", dir + "_gamma.csv");

  std::ifstream in(dir + ".csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "alpha,accuracy");
  std::getline(in, line);
  CHECK(line == "0,0.25");
  std::getline(in, line);
  CHECK(line == "0.5,0.75");

  std::ifstream gin(dir + "_gamma.csv");
  std::getline(gin, line);
  CHECK(line == "layer0.weight,layer1.weight");
  std::getline(gin, line);
  CHECK(line == "0.125,2");
  std::remove((dir + ".csv").c_str());
  std::remove((dir + "_gamma.csv").c_str());
}
