#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lodmsq/dataset.hpp"
#include "lodmsq/index.hpp"

namespace lodmsq {

struct ClusteredSpec {
  std::size_t n = 10000;
  std::size_t dim = 32;
  std::size_t clusters = 100;
  /// Cluster centers ~ N(mean_offset, center_std^2 I).
  double center_std = 1.0;
  double mean_offset = 0.5;
  /// Points ~ N(center, point_std^2 I).
  double point_std = 0.5;
  std::uint64_t seed = 0;
};

Dataset make_clustered(const ClusteredSpec& spec);

/// Copies of randomly chosen rows plus N(0, noise_std^2 I) noise.
Dataset make_noisy_queries(const Dataset& data, std::size_t count, double noise_std,
                           std::uint64_t seed);

Dataset make_gaussian(std::size_t n, std::size_t dim, std::uint64_t seed, double stddev = 1.0);

/// Random orthonormal matrix (QR of a Gaussian matrix with sign correction).
Rotation random_rotation(std::size_t dim, std::uint64_t seed);

/// A dataset every pipeline of `kind` encodes without loss, plus the frozen model
/// that makes it so.
///
/// Each residual is lambda R w + t v with w a concatenation of codewords of norm
/// 1/sqrt(n_B) that vanish on the coordinate carrying v, lambda on the SQ grid and t
/// on the UQ grid. Kinds without scales use lambda = 1, kinds without LOD use t = 0,
/// and MIPS_PQ uses R = I. L2_OPQ is not supported.
struct LosslessInstance {
  Dataset data;
  IndexConfig config;
  BuildOptions options;
};

LosslessInstance make_lossless(IndexKind kind, std::size_t n, std::size_t dim, std::size_t m,
                               std::uint64_t seed);

}  // namespace lodmsq
