#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "axis/params.hpp"

namespace axis {

enum class SelectionStrategy {
  Top,
  Bottom,
  Arbitrary,
  AverageTop,
  AverageBottom,
  EqualTopContribution,
};

SelectionStrategy parse_strategy(const std::string& name);
const char* strategy_name(SelectionStrategy strategy);

// One rank-one SVD component tagged with its origin.
struct Component {
  std::vector<double> u;
  double sigma = 0.0;
  std::vector<double> v;
  std::string source_id;
  std::size_t source_index = 0;  // position of the source in input order
  std::size_t comp_index = 0;    // position within that source's SVD
};

// Per-layer union of components from every source (Algorithm set C).
struct ComponentPool {
  struct Layer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Component> components;
  };
  std::map<std::string, Layer> layers;
  std::size_t num_sources = 0;
};

// Per-layer selected components, sorted by sigma descending.
struct TransferBasis {
  struct Layer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Component> components;
  };
  std::map<std::string, Layer> layers;
  std::vector<std::string> warnings;
};

// Per-layer budget: an absolute component count or a fraction of
// min(m, n), resolved per layer with floor (k = 0.10 on a 768-wide layer
// gives 76) and a minimum of 1.
struct KSpec {
  enum class Mode { Absolute, Fraction };
  Mode mode = Mode::Fraction;
  std::size_t absolute = 0;
  double fraction = 0.10;

  static KSpec absolute_count(std::size_t k);
  static KSpec rank_fraction(double f);
  static KSpec parse(const std::string& text);  // "76" or "0.10"

  std::size_t resolve(std::size_t rows, std::size_t cols) const;
  std::string to_string() const;
};

struct MergeProvenance {
  std::string strategy;
  std::string k_spec;
  std::map<std::string, std::size_t> k_per_layer;
  std::vector<std::string> source_ids;
  std::uint64_t seed = 0;
  double rank_tol = 0.0;
  bool final_svd = true;  // false marks raw non-orthogonal factors
  std::vector<std::string> warnings;
};

struct MergedDelta {
  struct LayerFactors {
    Matrix u;
    std::vector<double> s;
    Matrix v;
  };
  std::map<std::string, LayerFactors> layers;
  std::map<std::string, Tensor> vector_deltas;
  MergeProvenance provenance;

  Matrix reconstruct_layer(const std::string& name) const;
};

// Algorithm lines 2-5: SVD every matrix layer of every source and pool
// the tagged components.
ComponentPool decompose_sources(const std::vector<TaskVector>& task_vectors,
                                double rank_tol);

// Algorithm lines 6-7 plus the alternative strategies. rank_tol is
// reused for the intermediate SVD of the Average* strategies; seed
// drives the Arbitrary draw (per-layer stream derived from the layer
// name). Pools smaller than K are returned whole with a warning.
TransferBasis select(const ComponentPool& pool, SelectionStrategy strategy,
                     const KSpec& k, std::uint64_t seed, double rank_tol);

// Delta_m = sum of the selected rank-one components, per layer.
std::map<std::string, Matrix> synthesize(const TransferBasis& basis);

// Final SVD of Delta_m (Algorithm lines 15-17). With skip_final_svd the
// raw concatenated (U_m, Sigma_m, V_m) from the basis are kept and the
// provenance is flagged non-orthogonal (ablation path).
MergedDelta reorthogonalize(const std::map<std::string, Matrix>& delta_m,
                            const TransferBasis& basis, bool skip_final_svd,
                            double rank_tol);

// Stage 1 end to end: decompose, select, synthesize, reorthogonalize,
// plus the elementwise average of non-matrix layers.
MergedDelta merge_pipeline(const std::vector<TaskVector>& task_vectors,
                           SelectionStrategy strategy, const KSpec& k,
                           double rank_tol, bool skip_final_svd,
                           std::uint64_t seed);

}  // namespace axis
