#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "axis/merge.hpp"
#include "axis/rng.hpp"
#include "oracles.hpp"

using axis::Component;
using axis::ComponentPool;
using axis::KSpec;
using axis::Matrix;
using axis::MergedDelta;
using axis::ParamSet;
using axis::SelectionStrategy;
using axis::TaskVector;
using axis::Tensor;
using axis::TransferBasis;

namespace {

TaskVector make_tv(const std::string& id, const Matrix& weight,
                   const std::vector<double>& bias) {
  TaskVector tv;
  tv.source_id = id;
  tv.entries.emplace("w", Tensor::matrix(weight));
  tv.entries.emplace("b", Tensor::vector(bias));
  return tv;
}

std::vector<TaskVector> seeded_sources(std::size_t count, std::size_t rows,
                                       std::size_t cols, std::uint64_t seed) {
  std::vector<TaskVector> tvs;
  for (std::size_t i = 0; i < count; ++i) {
    tvs.push_back(make_tv("task" + std::to_string(i),
                          oracle::random_matrix(rows, cols, seed + i),
                          {0.1 * static_cast<double>(i), -0.2}));
  }
  return tvs;
}

// Identity triple for set comparisons.
using CompId = std::tuple<std::size_t, std::size_t>;

std::set<CompId> component_ids(const std::vector<Component>& comps) {
  std::set<CompId> ids;
  for (const Component& c : comps) ids.insert({c.source_index, c.comp_index});
  return ids;
}

ComponentPool synthetic_pool(const std::vector<double>& sigmas,
                             std::size_t num_sources) {
  ComponentPool pool;
  pool.num_sources = num_sources;
  ComponentPool::Layer layer;
  layer.rows = 2;
  layer.cols = 2;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    Component c;
    c.sigma = sigmas[i];
    c.u = {1.0, 0.0};
    c.v = {0.0, 1.0};
    c.source_id = "task" + std::to_string(i % num_sources);
    c.source_index = i % num_sources;
    c.comp_index = i / num_sources;
    layer.components.push_back(std::move(c));
  }
  pool.layers.emplace("w", std::move(layer));
  return pool;
}

// Brute-force selection oracle: full sort of tagged sigmas.
std::set<CompId> brute_force_top(const ComponentPool::Layer& layer,
                                 std::size_t k, bool top) {
  std::vector<const Component*> all;
  for (const Component& c : layer.components) all.push_back(&c);
  std::sort(all.begin(), all.end(), [&](const Component* a, const Component* b) {
    if (a->sigma != b->sigma) {
      return top ? a->sigma > b->sigma : a->sigma < b->sigma;
    }
    if (a->source_index != b->source_index) {
      return a->source_index < b->source_index;
    }
    return a->comp_index < b->comp_index;
  });
  std::set<CompId> ids;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) {
    ids.insert({all[i]->source_index, all[i]->comp_index});
  }
  return ids;
}

}  // namespace

TEST_CASE("decompose_sources pools tagged components") {
  // Rank-1 layer: a single component.
  Matrix rank1(3, 3);
  rank1(0, 0) = 2.0;
  const auto pool1 =
      axis::decompose_sources({make_tv("t0", rank1, {0.0})}, 1e-12);
  CHECK(pool1.layers.at("w").components.size() == 1);
  CHECK(pool1.layers.at("w").components[0].source_id == "t0");

  // Two full-rank sources pool 2r components.
  const auto pool2 = axis::decompose_sources(seeded_sources(2, 4, 3, 50), 1e-12);
  CHECK(pool2.layers.at("w").components.size() == 6);
  CHECK(pool2.num_sources == 2);

  // Per-source reconstruction round trip.
  const auto tvs = seeded_sources(3, 5, 4, 60);
  const auto pool3 = axis::decompose_sources(tvs, 1e-12);
  for (std::size_t src = 0; src < 3; ++src) {
    std::vector<axis::RankOne> terms;
    for (const Component& c : pool3.layers.at("w").components) {
      if (c.source_index == src) terms.push_back({c.u, c.sigma, c.v});
    }
    const Matrix rebuilt = axis::rank_one_sum(terms, 5, 4);
    const Matrix original = tvs[src].entries.at("w").as_matrix();
    CHECK(oracle::frob_distance(rebuilt, original) /
              axis::frobenius_norm(original) <
          1e-8);
  }
}

TEST_CASE("top selection takes the globally largest sigmas") {
  const auto pool = synthetic_pool({5.0, 4.0, 3.0, 2.0}, 2);
  const TransferBasis basis = axis::select(
      pool, SelectionStrategy::Top, KSpec::absolute_count(2), 0, 1e-12);
  const auto& comps = basis.layers.at("w").components;
  REQUIRE(comps.size() == 2);
  CHECK(comps[0].sigma == 5.0);
  CHECK(comps[1].sigma == 4.0);
}

TEST_CASE("top and bottom match the brute-force sort oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto tvs = seeded_sources(4, 10, 8, 100 + seed * 10);
    const auto pool = axis::decompose_sources(tvs, 0.0);
    const auto& layer = pool.layers.at("w");

    const TransferBasis top = axis::select(
        pool, SelectionStrategy::Top, KSpec::absolute_count(10), 0, 1e-12);
    CHECK(component_ids(top.layers.at("w").components) ==
          brute_force_top(layer, 10, true));

    const TransferBasis bottom = axis::select(
        pool, SelectionStrategy::Bottom, KSpec::absolute_count(10), 0, 1e-12);
    CHECK(component_ids(bottom.layers.at("w").components) ==
          brute_force_top(layer, 10, false));

    // Basis lists sort descending regardless of strategy.
    for (const auto* basis : {&top, &bottom}) {
      const auto& comps = basis->layers.at("w").components;
      for (std::size_t i = 0; i + 1 < comps.size(); ++i) {
        CHECK(comps[i].sigma >= comps[i + 1].sigma);
      }
    }
  }
}

TEST_CASE("tie-breaking follows (source_index, comp_index) ascending") {
  const auto pool = synthetic_pool({3.0, 3.0, 3.0, 3.0, 1.0, 1.0}, 3);
  const TransferBasis basis = axis::select(
      pool, SelectionStrategy::Top, KSpec::absolute_count(2), 0, 1e-12);
  const auto& comps = basis.layers.at("w").components;
  REQUIRE(comps.size() == 2);
  CHECK(comps[0].source_index == 0);
  CHECK(comps[0].comp_index == 0);
  CHECK(comps[1].source_index == 0);
  CHECK(comps[1].comp_index == 1);
}

TEST_CASE("arbitrary selection is seeded and without replacement") {
  const auto tvs = seeded_sources(3, 8, 6, 900);
  const auto pool = axis::decompose_sources(tvs, 0.0);
  const TransferBasis a = axis::select(
      pool, SelectionStrategy::Arbitrary, KSpec::absolute_count(7), 11, 1e-12);
  const TransferBasis b = axis::select(
      pool, SelectionStrategy::Arbitrary, KSpec::absolute_count(7), 11, 1e-12);
  const TransferBasis c = axis::select(
      pool, SelectionStrategy::Arbitrary, KSpec::absolute_count(7), 12, 1e-12);
  CHECK(component_ids(a.layers.at("w").components) ==
        component_ids(b.layers.at("w").components));
  CHECK(component_ids(a.layers.at("w").components).size() == 7);
  CHECK(component_ids(a.layers.at("w").components) !=
        component_ids(c.layers.at("w").components));
}

TEST_CASE("equal top contribution distributes the budget across sources") {
  const auto tvs = seeded_sources(3, 8, 8, 1200);
  const auto pool = axis::decompose_sources(tvs, 0.0);
  const TransferBasis basis =
      axis::select(pool, SelectionStrategy::EqualTopContribution,
                   KSpec::absolute_count(8), 0, 1e-12);
  const auto& comps = basis.layers.at("w").components;
  REQUIRE(comps.size() == 8);
  std::map<std::size_t, std::size_t> per_source;
  for (const Component& c : comps) per_source[c.source_index]++;
  // floor(8/3) = 2 each, remainder 2 to sources 0 and 1.
  CHECK(per_source[0] == 3);
  CHECK(per_source[1] == 3);
  CHECK(per_source[2] == 2);
  // Each source's share is its own top components.
  for (const Component& c : comps) {
    CHECK(c.comp_index < per_source[c.source_index]);
  }
}

TEST_CASE("averaged strategies produce synthetic components") {
  const auto tvs = seeded_sources(3, 6, 5, 1500);
  const auto pool = axis::decompose_sources(tvs, 0.0);
  const KSpec k = KSpec::absolute_count(3);

  const TransferBasis top =
      axis::select(pool, SelectionStrategy::AverageTop, k, 0, 1e-12);
  const auto& tc = top.layers.at("w").components;
  REQUIRE(tc.size() == 3);
  for (const Component& c : tc) CHECK(c.source_id == "averaged");

  // Oracle: average the per-source rank-3 truncations, SVD, take top 3.
  Matrix avg(6, 5);
  for (const TaskVector& tv : tvs) {
    const auto f = axis::svd(tv.entries.at("w").as_matrix(), 0.0);
    std::vector<double> s3(f.s.begin(), f.s.begin() + 3);
    Matrix u3(6, 3);
    Matrix v3(5, 3);
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t i = 0; i < 6; ++i) u3(i, j) = f.u(i, j);
      for (std::size_t i = 0; i < 5; ++i) v3(i, j) = f.v(i, j);
    }
    const Matrix r = axis::reconstruct(u3, s3, v3);
    for (std::size_t i = 0; i < avg.size(); ++i) avg.data()[i] += r.data()[i];
  }
  for (double& v : avg.data()) v /= 3.0;
  const auto expect = axis::svd(avg, 1e-12);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(tc[j].sigma == doctest::Approx(expect.s[j]).epsilon(1e-10));
  }

  const TransferBasis bottom =
      axis::select(pool, SelectionStrategy::AverageBottom, k, 0, 1e-12);
  const auto& bc = bottom.layers.at("w").components;
  REQUIRE(bc.size() == 3);
  for (std::size_t i = 0; i + 1 < bc.size(); ++i) {
    CHECK(bc[i].sigma >= bc[i + 1].sigma);
  }
  CHECK(bc.front().sigma <= tc.back().sigma + 1e-12);
}

TEST_CASE("small pools come back whole with a warning") {
  const auto tvs = seeded_sources(1, 3, 3, 1800);
  const auto pool = axis::decompose_sources(tvs, 0.0);
  const TransferBasis basis = axis::select(
      pool, SelectionStrategy::Top, KSpec::absolute_count(10), 0, 1e-12);
  CHECK(basis.layers.at("w").components.size() == 3);
  CHECK(!basis.warnings.empty());
}

TEST_CASE("invalid selection inputs") {
  const auto pool = synthetic_pool({1.0}, 1);
  CHECK_THROWS_AS(axis::select(pool, SelectionStrategy::Top,
                               KSpec::absolute_count(0), 0, 1e-12),
                  axis::Error);
  CHECK_THROWS_AS(axis::parse_strategy("sideways"), axis::Error);
}

TEST_CASE("synthesize sums the selected components") {
  // Two orthogonal rank-ones give a diagonal.
  ComponentPool pool;
  pool.num_sources = 1;
  ComponentPool::Layer layer;
  layer.rows = 2;
  layer.cols = 2;
  Component c1;
  c1.u = {1.0, 0.0};
  c1.sigma = 2.0;
  c1.v = {1.0, 0.0};
  c1.comp_index = 0;
  Component c2;
  c2.u = {0.0, 1.0};
  c2.sigma = 1.0;
  c2.v = {0.0, 1.0};
  c2.comp_index = 1;
  layer.components = {c1, c2};
  pool.layers.emplace("w", layer);
  const TransferBasis basis = axis::select(
      pool, SelectionStrategy::Top, KSpec::absolute_count(2), 0, 1e-12);
  const auto delta = axis::synthesize(basis);
  CHECK(delta.at("w")(0, 0) == 2.0);
  CHECK(delta.at("w")(1, 1) == 1.0);
  CHECK(delta.at("w")(0, 1) == 0.0);

  // Full basis of a single source rebuilds its delta.
  const auto tvs = seeded_sources(1, 6, 4, 2000);
  const auto pool2 = axis::decompose_sources(tvs, 0.0);
  const TransferBasis full = axis::select(
      pool2, SelectionStrategy::Top, KSpec::rank_fraction(1.0), 0, 1e-12);
  const auto delta2 = axis::synthesize(full);
  const Matrix original = tvs[0].entries.at("w").as_matrix();
  CHECK(oracle::frob_distance(delta2.at("w"), original) /
            axis::frobenius_norm(original) <
        1e-8);

  // Rank of the synthesized matrix is bounded by K.
  const auto tvs3 = seeded_sources(3, 8, 8, 2100);
  const auto pool3 = axis::decompose_sources(tvs3, 0.0);
  const TransferBasis limited = axis::select(
      pool3, SelectionStrategy::Top, KSpec::absolute_count(4), 0, 1e-12);
  const auto delta3 = axis::synthesize(limited);
  const auto f = axis::svd(delta3.at("w"), 0.0);
  std::size_t above = 0;
  for (double s : f.s) {
    if (s > 1e-10 * f.s.front()) ++above;
  }
  CHECK(above <= 4);
}

TEST_CASE("reorthogonalize restores orthonormal factors") {
  const auto tvs = seeded_sources(2, 7, 5, 2500);
  const auto pool = axis::decompose_sources(tvs, 0.0);
  const TransferBasis basis = axis::select(
      pool, SelectionStrategy::Top, KSpec::absolute_count(4), 0, 1e-12);
  const auto delta = axis::synthesize(basis);
  const MergedDelta merged = axis::reorthogonalize(delta, basis, false, 1e-12);
  const auto& f = merged.layers.at("w");
  CHECK(oracle::max_abs_offdiag_identity(f.u) < 1e-8);
  CHECK(oracle::max_abs_offdiag_identity(f.v) < 1e-8);
  const Matrix rebuilt = axis::reconstruct(f.u, f.s, f.v);
  CHECK(oracle::frob_distance(rebuilt, delta.at("w")) <=
        1e-8 * axis::frobenius_norm(delta.at("w")));
  CHECK(merged.provenance.final_svd);

  // Single source: spectrum preserved.
  const auto tvs1 = seeded_sources(1, 6, 4, 2600);
  const auto pool1 = axis::decompose_sources(tvs1, 0.0);
  const TransferBasis basis1 = axis::select(
      pool1, SelectionStrategy::Top, KSpec::rank_fraction(1.0), 0, 1e-12);
  const auto delta1 = axis::synthesize(basis1);
  const MergedDelta merged1 = axis::reorthogonalize(delta1, basis1, false, 1e-12);
  const auto& comps = basis1.layers.at("w").components;
  REQUIRE(merged1.layers.at("w").s.size() == comps.size());
  for (std::size_t j = 0; j < comps.size(); ++j) {
    CHECK(merged1.layers.at("w").s[j] ==
          doctest::Approx(comps[j].sigma).epsilon(1e-8));
  }
}

TEST_CASE("skip_final_svd keeps the raw non-orthogonal factors") {
  const auto tvs = seeded_sources(2, 6, 6, 2700);
  const auto pool = axis::decompose_sources(tvs, 0.0);
  const TransferBasis basis = axis::select(
      pool, SelectionStrategy::Top, KSpec::absolute_count(5), 0, 1e-12);
  const auto delta = axis::synthesize(basis);
  const MergedDelta merged = axis::reorthogonalize(delta, basis, true, 1e-12);
  CHECK(!merged.provenance.final_svd);
  const auto& f = merged.layers.at("w");
  REQUIRE(f.s.size() == 5);
  const auto& comps = basis.layers.at("w").components;
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(f.s[j] == comps[j].sigma);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(f.u(i, j) == comps[j].u[i]);
      CHECK(f.v(i, j) == comps[j].v[i]);
    }
  }
  // The raw factors still reproduce Delta_m = U_m Sigma_m V_m^T.
  const Matrix rebuilt = axis::reconstruct(f.u, f.s, f.v);
  CHECK(oracle::frob_distance(rebuilt, delta.at("w")) <=
        1e-8 * axis::frobenius_norm(delta.at("w")));
}

TEST_CASE("merge_pipeline single-source identity") {
  const auto tvs = seeded_sources(1, 8, 6, 3000);
  const MergedDelta merged =
      axis::merge_pipeline(tvs, SelectionStrategy::Top,
                           KSpec::rank_fraction(1.0), 1e-12, false, 0);
  const Matrix rebuilt = merged.reconstruct_layer("w");
  const Matrix original = tvs[0].entries.at("w").as_matrix();
  CHECK(oracle::frob_distance(rebuilt, original) /
            axis::frobenius_norm(original) <
        1e-8);
  CHECK(merged.vector_deltas.at("b").values == tvs[0].entries.at("b").values);
  CHECK(merged.provenance.source_ids == std::vector<std::string>{"task0"});
  CHECK(merged.provenance.strategy == "top");
}

TEST_CASE("merge_pipeline matches a brute-force pipeline oracle") {
  const auto tvs = seeded_sources(5, 10, 8, 3100);
  const MergedDelta merged = axis::merge_pipeline(
      tvs, SelectionStrategy::Top, KSpec::absolute_count(6), 1e-12, false, 0);

  // Oracle: enumerate all components, sort, sum, svd.
  std::vector<std::tuple<double, std::size_t, std::size_t, std::size_t>> tagged;
  std::vector<axis::SvdFactors> factors;
  for (std::size_t src = 0; src < tvs.size(); ++src) {
    factors.push_back(axis::svd(tvs[src].entries.at("w").as_matrix(), 1e-12));
    for (std::size_t j = 0; j < factors.back().rank(); ++j) {
      tagged.emplace_back(factors.back().s[j], src, j, 0);
    }
  }
  std::sort(tagged.begin(), tagged.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  Matrix sum(10, 8);
  for (std::size_t k = 0; k < 6; ++k) {
    const auto& [sigma, src, j, unused] = tagged[k];
    const auto& f = factors[src];
    for (std::size_t r = 0; r < 10; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        sum(r, c) += f.u(r, j) * sigma * f.v(c, j);
      }
    }
  }
  const Matrix rebuilt = merged.reconstruct_layer("w");
  CHECK(oracle::frob_distance(rebuilt, sum) <=
        1e-8 * axis::frobenius_norm(sum));
}

TEST_CASE("merge_pipeline is deterministic bit for bit") {
  const auto tvs = seeded_sources(3, 9, 7, 3200);
  const MergedDelta a = axis::merge_pipeline(
      tvs, SelectionStrategy::Arbitrary, KSpec::absolute_count(5), 1e-12, false, 99);
  const MergedDelta b = axis::merge_pipeline(
      tvs, SelectionStrategy::Arbitrary, KSpec::absolute_count(5), 1e-12, false, 99);
  CHECK(a.layers.at("w").u.data() == b.layers.at("w").u.data());
  CHECK(a.layers.at("w").s == b.layers.at("w").s);
  CHECK(a.layers.at("w").v.data() == b.layers.at("w").v.data());
  CHECK(a.provenance.source_ids == b.provenance.source_ids);
  CHECK(a.provenance.k_per_layer == b.provenance.k_per_layer);
}

TEST_CASE("retained factor width is independent of the source count") {
  const KSpec k = KSpec::absolute_count(4);
  const auto few = seeded_sources(3, 8, 8, 3300);
  const auto many = seeded_sources(10, 8, 8, 3300);
  const MergedDelta a =
      axis::merge_pipeline(few, SelectionStrategy::Top, k, 1e-12, false, 0);
  const MergedDelta b =
      axis::merge_pipeline(many, SelectionStrategy::Top, k, 1e-12, false, 0);
  CHECK(a.layers.at("w").s.size() == b.layers.at("w").s.size());
  CHECK(a.layers.at("w").u.cols() == b.layers.at("w").u.cols());
  CHECK(a.layers.at("w").u.cols() <= 4);
}

TEST_CASE("rank bound holds across a K sweep") {
  const auto tvs = seeded_sources(4, 20, 16, 3400);
  for (std::size_t k : {std::size_t{1}, std::size_t{4}, std::size_t{16},
                        std::size_t{64}}) {
    const MergedDelta merged = axis::merge_pipeline(
        tvs, SelectionStrategy::Top, KSpec::absolute_count(k), 1e-12, false, 0);
    const auto& s = merged.layers.at("w").s;
    if (s.empty()) continue;
    std::size_t above = 0;
    for (double v : s) {
      if (v > 1e-10 * s.front()) ++above;
    }
    CHECK(above <= k);
  }
}

TEST_CASE("selected sigma-squared sum: top dominates bottom") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto tvs = seeded_sources(3, 10, 8, 3500 + seed * 7);
    const auto pool = axis::decompose_sources(tvs, 0.0);
    const KSpec k = KSpec::absolute_count(6);
    const auto top = axis::select(pool, SelectionStrategy::Top, k, 0, 1e-12);
    const auto bottom =
        axis::select(pool, SelectionStrategy::Bottom, k, 0, 1e-12);
    double top_sum = 0.0;
    for (const Component& c : top.layers.at("w").components) {
      top_sum += c.sigma * c.sigma;
    }
    double bottom_sum = 0.0;
    for (const Component& c : bottom.layers.at("w").components) {
      bottom_sum += c.sigma * c.sigma;
    }
    CHECK(top_sum >= bottom_sum);
  }
}

TEST_CASE("a paper-scale budget keeps exactly 76 values") {
  // Pool rank across sources >= 760: ten full-rank 80x96 sources.
  std::vector<TaskVector> tvs;
  for (std::size_t i = 0; i < 10; ++i) {
    TaskVector tv;
    tv.source_id = "task" + std::to_string(i);
    tv.entries.emplace("w",
                       Tensor::matrix(oracle::random_matrix(80, 96, 4000 + i)));
    tvs.push_back(std::move(tv));
  }
  const MergedDelta merged = axis::merge_pipeline(
      tvs, SelectionStrategy::Top, KSpec::absolute_count(76), 1e-12, false, 0);
  CHECK(merged.layers.at("w").s.size() == 76);
}

TEST_CASE("fractional K resolves with floor and a minimum of one") {
  CHECK(KSpec::rank_fraction(0.10).resolve(768, 768) == 76);
  CHECK(KSpec::rank_fraction(0.10).resolve(64, 32) == 3);
  CHECK(KSpec::rank_fraction(0.10).resolve(8, 8) == 1);
  CHECK(KSpec::parse("0.10").mode == KSpec::Mode::Fraction);
  CHECK(KSpec::parse("76").mode == KSpec::Mode::Absolute);
  CHECK_THROWS_AS(KSpec::parse("0"), axis::Error);
  CHECK_THROWS_AS(KSpec::parse("1.5"), axis::Error);
}
