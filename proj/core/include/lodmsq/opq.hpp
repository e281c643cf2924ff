#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lodmsq/dataset.hpp"
#include "lodmsq/pq.hpp"

namespace lodmsq {

/// Orthonormal d x d matrix, row-major float32.
struct Rotation {
  std::size_t dim = 0;
  std::vector<float> matrix;

  static Rotation identity(std::size_t dim);

  /// R x
  void apply(std::span<const float> x, std::span<float> out) const;
  /// R^T x
  void apply_transpose(std::span<const float> x, std::span<float> out) const;
  /// Double-precision R^T x, used on the query side.
  void apply_transpose(std::span<const float> x, std::span<double> out) const;

  /// max |(R^T R - I)_{ij}|
  double orthonormality_error() const;
  bool is_identity() const;

  bool operator==(const Rotation&) const = default;
};

struct OPQOptions {
  std::size_t n_B = 0;
  std::size_t n_W = 16;
  int outer_iters = 20;
  int inner_iters = 10;
  // Lloyd passes per outer iteration; the codebooks are warm so a few suffice.
  int refine_iters = 4;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct OPQResult {
  Rotation rotation;
  PQCodebook pq;
  /// Sum ||x - R recon(encode(R^T x))||^2: entry 0 after the initial PQ, then one per outer iteration.
  std::vector<double> objective;
  /// Set when a Procrustes SVD produced a non-finite result and R fell back to identity.
  bool svd_fallback = false;
};

/// Alternating minimisation of PQ codebooks and a global rotation.
///
/// R starts at identity and the PQ is trained with train_pq; each outer
/// iteration then solves orthogonal Procrustes for R against the current
/// reconstructions and refines the codebooks on R^T x with warm-started Lloyd.
OPQResult train_opq(const Dataset& data, const OPQOptions& options);

/// R^T x for every row.
Dataset rotate_transpose(const Rotation& r, const Dataset& data, int threads = 1);

/// Sum of squared errors ||R^T x - recon(encode(R^T x))||^2 over rows.
double opq_objective(const Rotation& r, const PQCodebook& pq, const Dataset& data, int threads = 1);

}  // namespace lodmsq
