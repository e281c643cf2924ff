#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lodmsq/dataset.hpp"
#include "lodmsq/vq.hpp"

namespace lodmsq {

/// Product quantizer over contiguous subspaces.
///
/// Subspace b spans [offsets[b], offsets[b+1]). All subspaces have d / n_B
/// dimensions except the last, which absorbs the remainder.
struct PQCodebook {
  std::size_t dim = 0;
  std::size_t n_B = 0;
  std::size_t n_W = 0;
  std::vector<std::size_t> offsets;
  /// codebooks[b] holds n_W codewords of sub_dim(b) floats, row-major.
  std::vector<std::vector<float>> codebooks;

  std::size_t sub_dim(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
  std::span<const float> codeword(std::size_t b, std::size_t j) const {
    return {codebooks[b].data() + j * sub_dim(b), sub_dim(b)};
  }
  /// Bits per code, ceil(log2 n_W).
  int code_bits() const;

  bool operator==(const PQCodebook&) const = default;
};

using PQCode = std::uint8_t;

/// Subspace boundaries for splitting `dim` into `n_B` contiguous slices.
std::vector<std::size_t> subspace_offsets(std::size_t dim, std::size_t n_B);

/// Copy of columns [begin, end) of every row.
Dataset slice_columns(const Dataset& data, std::size_t begin, std::size_t end);

/// Independent train_vq per subspace slice, each with the same seed.
PQCodebook train_pq(const Dataset& data, std::size_t n_B, std::size_t n_W, int max_iters,
                    std::uint64_t seed, int threads = 1);

/// Per-subspace nearest codeword; ties go to the smaller code.
std::vector<PQCode> encode_pq(const PQCodebook& cb, std::span<const float> x);
void encode_pq_into(const PQCodebook& cb, std::span<const float> x, std::span<PQCode> codes);

/// Concatenation of the indexed codewords.
std::vector<float> reconstruct_pq(const PQCodebook& cb, std::span<const PQCode> codes);
void reconstruct_pq_into(const PQCodebook& cb, std::span<const PQCode> codes, std::span<float> out);

}  // namespace lodmsq
