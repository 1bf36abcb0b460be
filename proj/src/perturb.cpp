#include "axis/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "axis/rng.hpp"

namespace axis {

TaskVector gaussian_corrupt(const TaskVector& tv, double ratio,
                            std::uint64_t seed) {
  if (!(ratio >= 0.0)) {
    throw Error(ErrorCode::InvalidInput, "noise ratio must be >= 0");
  }
  TaskVector out = tv;
  if (ratio == 0.0) return out;
  for (auto& [name, tensor] : out.entries) {
    if (tensor.kind != Kind::MatrixKind) continue;
    double sq = 0.0;
    for (double v : tensor.values) sq += v * v;
    const double std_dev = ratio * std::sqrt(sq);
    if (std_dev == 0.0) continue;
    rng::Xoshiro256 gen(rng::derive_seed(seed, name));
    for (double& v : tensor.values) v += std_dev * rng::normal(gen);
  }
  return out;
}

TaskVector magnitude_prune(const TaskVector& tv, double sparsity) {
  if (!(sparsity >= 0.0) || sparsity >= 1.0) {
    throw Error(ErrorCode::InvalidInput, "sparsity must be in [0, 1)");
  }
  TaskVector out = tv;
  if (sparsity == 0.0) return out;
  for (auto& [name, tensor] : out.entries) {
    if (tensor.kind != Kind::MatrixKind) continue;
    const std::size_t numel = tensor.values.size();
    const auto kill = static_cast<std::size_t>(
        std::floor(sparsity * static_cast<double>(numel)));
    if (kill == 0) continue;
    std::vector<std::size_t> order(numel);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ma = std::abs(tensor.values[a]);
      const double mb = std::abs(tensor.values[b]);
      if (ma != mb) return ma < mb;
      return a < b;
    });
    for (std::size_t i = 0; i < kill; ++i) tensor.values[order[i]] = 0.0;
  }
  return out;
}

Batch patch_dropout(const Batch& batch, std::size_t patch_size,
                    double fraction, std::uint64_t seed) {
  if (patch_size == 0 || batch.inputs.cols() % patch_size != 0) {
    throw Error(ErrorCode::InvalidInput,
                "input width is not divisible by patch size");
  }
  if (!(fraction >= 0.0) || fraction > 1.0) {
    throw Error(ErrorCode::InvalidInput, "dropout fraction must be in [0, 1]");
  }
  const std::size_t num_patches = batch.inputs.cols() / patch_size;
  const auto drop = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(num_patches)));

  Batch out = batch;
  if (drop == 0) return out;
  for (std::size_t row = 0; row < out.inputs.rows(); ++row) {
    rng::Xoshiro256 gen(rng::derive_seed(seed, row));
    const auto picked = rng::sample_indices(gen, num_patches, drop);
    for (std::size_t patch : picked) {
      for (std::size_t c = patch * patch_size; c < (patch + 1) * patch_size;
           ++c) {
        out.inputs(row, c) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace axis
