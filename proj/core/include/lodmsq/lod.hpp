#pragma once

#include <span>
#include <vector>

#include "lodmsq/dataset.hpp"

namespace lodmsq {

// Local orthogonal decomposition of a residual r against a unit direction v:
//   r = (r.v) v + (r - (r.v) v)
// All arithmetic is double precision.

/// (x.v) v
std::vector<double> proj_parallel(std::span<const double> v, std::span<const double> x);

/// x - (x.v) v
std::vector<double> proj_orth(std::span<const double> v, std::span<const double> x);

/// c / ||c||. Throws InvalidArgument for a zero center.
std::vector<float> proj_dir_center(std::span<const float> center);

/// Leading eigenvector of the uncentered second moment (1/n) sum q q^T.
///
/// The sign is fixed so the first nonzero coordinate is positive. Throws for
/// fewer than two queries or an all-zero moment matrix.
std::vector<float> proj_dir_query_pca(const Dataset& queries);

struct ScaleResult {
  double lambda = 0.0;
  /// Denominator was zero; lambda forced to 0.
  bool degenerate = false;
};

/// lambda = ||o|| / ||proj_orth(v, recon)||, where recon is the rotated PQ reconstruction.
ScaleResult compute_scale(std::span<const double> o, std::span<const double> recon,
                          std::span<const double> v);

/// z = (r - msq_recon) . v
double compute_z(std::span<const double> r, std::span<const double> msq_recon,
                 std::span<const double> v);

double dot_d(std::span<const double> a, std::span<const double> b);
std::vector<double> to_double(std::span<const float> x);

}  // namespace lodmsq
