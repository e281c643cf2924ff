#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lodmsq/dataset.hpp"

namespace lodmsq {

/// Flat k-means codebook: `count()` centers of dimension `dim`, row-major.
struct VQCodebook {
  std::size_t dim = 0;
  std::vector<float> centers;

  std::size_t count() const { return dim == 0 ? 0 : centers.size() / dim; }
  std::span<const float> center(std::size_t i) const { return {centers.data() + i * dim, dim}; }
  std::span<float> center(std::size_t i) { return {centers.data() + i * dim, dim}; }

  bool operator==(const VQCodebook&) const = default;
};

struct VQTrainStats {
  /// Total squared distortion after each assignment step (incl. empty-cluster repair).
  std::vector<double> distortion;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd k-means from k-means++ seeding.
///
/// Stops after `max_iters` iterations or once assignments stop changing.
/// Empty clusters are re-seeded with the farthest point of the largest cluster.
VQCodebook train_vq(const Dataset& data, std::size_t m, int max_iters, std::uint64_t seed,
                    int threads = 1, VQTrainStats* stats = nullptr);

/// Lloyd iterations starting from an existing codebook (same stopping rules).
void refine_vq(const Dataset& data, VQCodebook& codebook, int max_iters, int threads = 1,
               VQTrainStats* stats = nullptr);

/// Nearest center by l2 distance; ties go to the smaller index.
std::uint32_t assign_vq(const VQCodebook& codebook, std::span<const float> x);

/// assign_vq for every row.
std::vector<std::uint32_t> assign_all(const VQCodebook& codebook, const Dataset& data,
                                      int threads = 1);

/// Sum over rows of squared distance to the nearest center.
double vq_distortion(const VQCodebook& codebook, const Dataset& data);

}  // namespace lodmsq
