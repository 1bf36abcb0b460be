#pragma once

#include <cstdint>

#include "axis/net.hpp"
#include "axis/params.hpp"

namespace axis {

// Adds i.i.d. zero-mean Gaussian noise with standard deviation
// ratio * ||layer||_F to every matrix layer; vector layers untouched.
// Deterministic per (seed, layer name).
TaskVector gaussian_corrupt(const TaskVector& tv, double ratio,
                            std::uint64_t seed);

// Zeroes the floor(sparsity * numel) smallest-magnitude entries of each
// matrix layer; ties at the threshold resolve by flattened index
// ascending.
TaskVector magnitude_prune(const TaskVector& tv, double sparsity);

// Partitions each input row into contiguous patches of patch_size
// features and zeroes round(fraction * num_patches) of them per sample.
// The mask depends only on (seed, sample index).
Batch patch_dropout(const Batch& batch, std::size_t patch_size,
                    double fraction, std::uint64_t seed);

}  // namespace axis
