#include "axis/merge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "axis/rng.hpp"

namespace axis {

SelectionStrategy parse_strategy(const std::string& name) {
  if (name == "top") return SelectionStrategy::Top;
  if (name == "bottom") return SelectionStrategy::Bottom;
  if (name == "arbitrary") return SelectionStrategy::Arbitrary;
  if (name == "average_top") return SelectionStrategy::AverageTop;
  if (name == "average_bottom") return SelectionStrategy::AverageBottom;
  if (name == "equal_top_contribution") {
    return SelectionStrategy::EqualTopContribution;
  }
  throw Error(ErrorCode::InvalidStrategy, "unknown strategy: " + name);
}

const char* strategy_name(SelectionStrategy strategy) {
  switch (strategy) {
    case SelectionStrategy::Top: return "top";
    case SelectionStrategy::Bottom: return "bottom";
    case SelectionStrategy::Arbitrary: return "arbitrary";
    case SelectionStrategy::AverageTop: return "average_top";
    case SelectionStrategy::AverageBottom: return "average_bottom";
    case SelectionStrategy::EqualTopContribution:
      return "equal_top_contribution";
  }
  throw Error(ErrorCode::InvalidStrategy, "unknown strategy enum value");
}

KSpec KSpec::absolute_count(std::size_t k) {
  KSpec spec;
  spec.mode = Mode::Absolute;
  spec.absolute = k;
  return spec;
}

KSpec KSpec::rank_fraction(double f) {
  if (!(f > 0.0) || f > 1.0) {
    throw Error(ErrorCode::InvalidInput, "k fraction must be in (0, 1]");
  }
  KSpec spec;
  spec.mode = Mode::Fraction;
  spec.fraction = f;
  return spec;
}

KSpec KSpec::parse(const std::string& text) {
  if (text.find('.') != std::string::npos) {
    return rank_fraction(std::stod(text));
  }
  const long k = std::stol(text);
  if (k < 1) throw Error(ErrorCode::InvalidInput, "k must be >= 1");
  return absolute_count(static_cast<std::size_t>(k));
}

std::size_t KSpec::resolve(std::size_t rows, std::size_t cols) const {
  if (mode == Mode::Absolute) return absolute;
  const double width = static_cast<double>(std::min(rows, cols));
  const auto k = static_cast<std::size_t>(std::floor(fraction * width));
  return std::max<std::size_t>(1, k);
}

std::string KSpec::to_string() const {
  char buf[64];
  if (mode == Mode::Absolute) {
    std::snprintf(buf, sizeof(buf), "%zu", absolute);
  } else {
    std::snprintf(buf, sizeof(buf), "%.6g", fraction);
  }
  return buf;
}

Matrix MergedDelta::reconstruct_layer(const std::string& name) const {
  auto it = layers.find(name);
  if (it == layers.end()) {
    throw Error(ErrorCode::SchemaMismatch, "unknown merged layer: " + name);
  }
  return reconstruct(it->second.u, it->second.s, it->second.v);
}

ComponentPool decompose_sources(const std::vector<TaskVector>& task_vectors,
                                double rank_tol) {
  if (task_vectors.empty()) {
    throw Error(ErrorCode::EmptyInput, "no task vectors to decompose");
  }
  const TaskVector& ref = task_vectors.front();
  ComponentPool pool;
  pool.num_sources = task_vectors.size();
  for (const auto& [name, tensor] : ref.entries) {
    if (tensor.kind != Kind::MatrixKind) continue;
    ComponentPool::Layer layer;
    layer.rows = tensor.shape[0];
    layer.cols = tensor.shape[1];
    pool.layers.emplace(name, std::move(layer));
  }
  for (std::size_t src = 0; src < task_vectors.size(); ++src) {
    const TaskVector& tv = task_vectors[src];
    if (tv.entries.size() != ref.entries.size()) {
      throw Error(ErrorCode::SchemaMismatch, "task vector schemas differ");
    }
    for (auto& [name, layer] : pool.layers) {
      auto it = tv.entries.find(name);
      if (it == tv.entries.end() || it->second.kind != Kind::MatrixKind ||
          it->second.shape[0] != layer.rows ||
          it->second.shape[1] != layer.cols) {
        throw Error(ErrorCode::SchemaMismatch,
                    "task vector schemas differ at layer: " + name);
      }
      const SvdFactors factors = svd(it->second.as_matrix(), rank_tol);
      for (std::size_t j = 0; j < factors.rank(); ++j) {
        Component comp;
        comp.sigma = factors.s[j];
        comp.source_id = tv.source_id;
        comp.source_index = src;
        comp.comp_index = j;
        comp.u.resize(layer.rows);
        for (std::size_t i = 0; i < layer.rows; ++i) comp.u[i] = factors.u(i, j);
        comp.v.resize(layer.cols);
        for (std::size_t i = 0; i < layer.cols; ++i) comp.v[i] = factors.v(i, j);
        layer.components.push_back(std::move(comp));
      }
    }
  }
  return pool;
}

namespace {

// Global ordering: sigma descending, ties by (source_index, comp_index)
// ascending.
bool sigma_desc(const Component& a, const Component& b) {
  if (a.sigma != b.sigma) return a.sigma > b.sigma;
  if (a.source_index != b.source_index) return a.source_index < b.source_index;
  return a.comp_index < b.comp_index;
}

// Smallest sigmas first, same tie rule.
bool sigma_asc(const Component& a, const Component& b) {
  if (a.sigma != b.sigma) return a.sigma < b.sigma;
  if (a.source_index != b.source_index) return a.source_index < b.source_index;
  return a.comp_index < b.comp_index;
}

std::vector<RankOne> to_rank_ones(const std::vector<Component>& components) {
  std::vector<RankOne> terms;
  terms.reserve(components.size());
  for (const Component& c : components) {
    terms.push_back(RankOne{c.u, c.sigma, c.v});
  }
  return terms;
}

// Rank-K (top or bottom) reconstruction of one source's components.
Matrix truncated_source(const std::vector<Component>& source_components,
                        std::size_t k, bool from_top, std::size_t rows,
                        std::size_t cols) {
  std::vector<Component> sorted = source_components;
  std::sort(sorted.begin(), sorted.end(), sigma_desc);
  std::vector<Component> kept;
  if (from_top) {
    const std::size_t take = std::min(k, sorted.size());
    kept.assign(sorted.begin(), sorted.begin() + take);
  } else {
    const std::size_t take = std::min(k, sorted.size());
    kept.assign(sorted.end() - take, sorted.end());
  }
  return rank_one_sum(to_rank_ones(kept), rows, cols);
}

std::vector<Component> factors_to_components(const SvdFactors& factors,
                                             const std::string& source_id) {
  std::vector<Component> out;
  out.reserve(factors.rank());
  for (std::size_t j = 0; j < factors.rank(); ++j) {
    Component comp;
    comp.sigma = factors.s[j];
    comp.source_id = source_id;
    comp.source_index = 0;
    comp.comp_index = j;
    comp.u.resize(factors.u.rows());
    for (std::size_t i = 0; i < factors.u.rows(); ++i) comp.u[i] = factors.u(i, j);
    comp.v.resize(factors.v.rows());
    for (std::size_t i = 0; i < factors.v.rows(); ++i) comp.v[i] = factors.v(i, j);
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace

TransferBasis select(const ComponentPool& pool, SelectionStrategy strategy,
                     const KSpec& k, std::uint64_t seed, double rank_tol) {
  if (k.mode == KSpec::Mode::Absolute && k.absolute == 0) {
    throw Error(ErrorCode::InvalidInput, "k must be >= 1");
  }
  TransferBasis basis;
  for (const auto& [name, layer] : pool.layers) {
    const std::size_t budget = k.resolve(layer.rows, layer.cols);
    TransferBasis::Layer out;
    out.rows = layer.rows;
    out.cols = layer.cols;

    const bool averaged = strategy == SelectionStrategy::AverageTop ||
                          strategy == SelectionStrategy::AverageBottom;
    if (!averaged && layer.components.size() <= budget &&
        strategy != SelectionStrategy::EqualTopContribution) {
      out.components = layer.components;
      std::sort(out.components.begin(), out.components.end(), sigma_desc);
      if (layer.components.size() < budget) {
        basis.warnings.push_back("layer " + name + ": pool size " +
                                 std::to_string(layer.components.size()) +
                                 " smaller than K " + std::to_string(budget) +
                                 ", returning whole pool");
      }
      basis.layers.emplace(name, std::move(out));
      continue;
    }

    switch (strategy) {
      case SelectionStrategy::Top: {
        out.components = layer.components;
        std::sort(out.components.begin(), out.components.end(), sigma_desc);
        out.components.resize(budget);
        break;
      }
      case SelectionStrategy::Bottom: {
        out.components = layer.components;
        std::sort(out.components.begin(), out.components.end(), sigma_asc);
        out.components.resize(budget);
        std::sort(out.components.begin(), out.components.end(), sigma_desc);
        break;
      }
      case SelectionStrategy::Arbitrary: {
        rng::Xoshiro256 gen(rng::derive_seed(seed, name));
        const auto picked =
            rng::sample_indices(gen, layer.components.size(), budget);
        for (std::size_t idx : picked) out.components.push_back(layer.components[idx]);
        std::sort(out.components.begin(), out.components.end(), sigma_desc);
        break;
      }
      case SelectionStrategy::EqualTopContribution: {
        if (pool.num_sources == 0) {
          throw Error(ErrorCode::EmptyInput, "pool has no sources");
        }
        const std::size_t quota = budget / pool.num_sources;
        const std::size_t remainder = budget % pool.num_sources;
        std::vector<std::vector<Component>> by_source(pool.num_sources);
        for (const Component& c : layer.components) {
          by_source[c.source_index].push_back(c);
        }
        for (std::size_t src = 0; src < pool.num_sources; ++src) {
          auto& list = by_source[src];
          std::sort(list.begin(), list.end(), sigma_desc);
          const std::size_t want = quota + (src < remainder ? 1 : 0);
          const std::size_t take = std::min(want, list.size());
          if (take < want) {
            basis.warnings.push_back(
                "layer " + name + ": source " + std::to_string(src) +
                " has only " + std::to_string(list.size()) +
                " components for an equal-contribution quota of " +
                std::to_string(want));
          }
          out.components.insert(out.components.end(), list.begin(),
                                list.begin() + take);
        }
        std::sort(out.components.begin(), out.components.end(), sigma_desc);
        break;
      }
      case SelectionStrategy::AverageTop:
      case SelectionStrategy::AverageBottom: {
        const bool from_top = strategy == SelectionStrategy::AverageTop;
        std::vector<std::vector<Component>> by_source(pool.num_sources);
        for (const Component& c : layer.components) {
          by_source[c.source_index].push_back(c);
        }
        Matrix avg(layer.rows, layer.cols);
        for (const auto& list : by_source) {
          const Matrix truncated =
              truncated_source(list, budget, from_top, layer.rows, layer.cols);
          for (std::size_t i = 0; i < avg.size(); ++i) {
            avg.data()[i] += truncated.data()[i];
          }
        }
        const double inv = 1.0 / static_cast<double>(pool.num_sources);
        for (double& x : avg.data()) x *= inv;

        const SvdFactors factors = svd(avg, rank_tol);
        std::vector<Component> comps = factors_to_components(factors, "averaged");
        if (comps.size() > budget) {
          if (from_top) {
            comps.resize(budget);
          } else {
            comps.erase(comps.begin(),
                        comps.begin() + (comps.size() - budget));
          }
        } else if (comps.size() < budget) {
          basis.warnings.push_back(
              "layer " + name + ": averaged matrix rank " +
              std::to_string(comps.size()) + " below K " +
              std::to_string(budget));
        }
        out.components = std::move(comps);
        break;
      }
    }
    basis.layers.emplace(name, std::move(out));
  }
  return basis;
}

std::map<std::string, Matrix> synthesize(const TransferBasis& basis) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, layer] : basis.layers) {
    out.emplace(name,
                rank_one_sum(to_rank_ones(layer.components), layer.rows,
                             layer.cols));
  }
  return out;
}

MergedDelta reorthogonalize(const std::map<std::string, Matrix>& delta_m,
                            const TransferBasis& basis, bool skip_final_svd,
                            double rank_tol) {
  MergedDelta merged;
  merged.provenance.final_svd = !skip_final_svd;
  for (const auto& [name, delta] : delta_m) {
    if (!delta.all_finite()) {
      throw Error(ErrorCode::InvalidInput, "non-finite merged layer: " + name);
    }
    auto bit = basis.layers.find(name);
    if (bit == basis.layers.end()) {
      throw Error(ErrorCode::SchemaMismatch,
                  "no transfer basis for layer: " + name);
    }
    const std::size_t width = bit->second.components.size();
    MergedDelta::LayerFactors factors;
    if (skip_final_svd) {
      // Raw concatenated columns from the basis, in sigma-descending
      // order; not orthogonal in general.
      factors.u = Matrix(bit->second.rows, width);
      factors.v = Matrix(bit->second.cols, width);
      factors.s.resize(width);
      for (std::size_t j = 0; j < width; ++j) {
        const Component& c = bit->second.components[j];
        factors.s[j] = c.sigma;
        for (std::size_t i = 0; i < c.u.size(); ++i) factors.u(i, j) = c.u[i];
        for (std::size_t i = 0; i < c.v.size(); ++i) factors.v(i, j) = c.v[i];
      }
    } else {
      const SvdFactors f = svd(delta, std::max(rank_tol, 1e-12));
      const std::size_t keep = std::min(width, f.rank());
      factors.u = Matrix(f.u.rows(), keep);
      factors.v = Matrix(f.v.rows(), keep);
      factors.s.assign(f.s.begin(), f.s.begin() + keep);
      for (std::size_t j = 0; j < keep; ++j) {
        for (std::size_t i = 0; i < f.u.rows(); ++i) factors.u(i, j) = f.u(i, j);
        for (std::size_t i = 0; i < f.v.rows(); ++i) factors.v(i, j) = f.v(i, j);
      }
    }
    merged.layers.emplace(name, std::move(factors));
  }
  merged.provenance.warnings = basis.warnings;
  return merged;
}

MergedDelta merge_pipeline(const std::vector<TaskVector>& task_vectors,
                           SelectionStrategy strategy, const KSpec& k,
                           double rank_tol, bool skip_final_svd,
                           std::uint64_t seed) {
  const ComponentPool pool = decompose_sources(task_vectors, rank_tol);
  const TransferBasis basis = select(pool, strategy, k, seed, rank_tol);
  const auto delta_m = synthesize(basis);
  MergedDelta merged = reorthogonalize(delta_m, basis, skip_final_svd, rank_tol);
  merged.vector_deltas = average_nonmatrix(task_vectors);

  merged.provenance.strategy = strategy_name(strategy);
  merged.provenance.k_spec = k.to_string();
  merged.provenance.seed = seed;
  merged.provenance.rank_tol = rank_tol;
  for (const TaskVector& tv : task_vectors) {
    merged.provenance.source_ids.push_back(tv.source_id);
  }
  for (const auto& [name, layer] : pool.layers) {
    merged.provenance.k_per_layer[name] = k.resolve(layer.rows, layer.cols);
  }
  return merged;
}

}  // namespace axis
