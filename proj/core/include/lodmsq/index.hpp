#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lodmsq/dataset.hpp"
#include "lodmsq/opq.hpp"
#include "lodmsq/pq.hpp"
#include "lodmsq/scalar_quant.hpp"
#include "lodmsq/vq.hpp"

namespace lodmsq {

/// Residual quantization pipeline stored in an index. The numeric values are
/// the on-disk kind tag.
enum class IndexKind : std::uint8_t {
  kMipsPq = 0,      ///< IVF + PQ on residuals
  kMipsOpq = 1,     ///< IVF + global OPQ on residuals
  kL2Opq = 2,       ///< MIPS-to-l2 transform, l2 IVF, OPQ on residuals
  kMipsMsq = 3,     ///< IVF + norm-preserving scaled OPQ on whole residuals
  kMipsLodOpq = 4,  ///< LOD, OPQ on orthogonal component, UQ on projected component
  kMipsLodMsq = 5,  ///< LOD, MSQ on orthogonal component, UQ on projected component
};

std::string_view kind_name(IndexKind kind);
/// Accepts "MIPS_LOD_MSQ", "LOD_MSQ", "lod-msq" and similar spellings.
IndexKind parse_kind(std::string_view name);

constexpr bool uses_lod(IndexKind k) {
  return k == IndexKind::kMipsLodOpq || k == IndexKind::kMipsLodMsq;
}
constexpr bool uses_scale(IndexKind k) {
  return k == IndexKind::kMipsMsq || k == IndexKind::kMipsLodMsq;
}

/// Indexing parameters: partitions, PQ codebooks, codewords, UQ bits, SQ bits.
struct IndexConfig {
  std::size_t m = 20;
  std::size_t n_B = 23;
  std::size_t n_W = 16;
  int l_UQ = 8;
  int l_SQ = 4;

  bool operator==(const IndexConfig&) const = default;
};

/// Throws InvalidArgument when the config is unusable for `dim`.
void validate_config(const IndexConfig& config, IndexKind kind, std::size_t dim);

struct EntryBits {
  /// PQ codes plus UQ code where present.
  int payload = 0;
  /// Scale code, reported separately.
  int scale = 0;
};

/// Stored bits per database vector for a kind.
EntryBits entry_bits(const IndexConfig& config, IndexKind kind);

/// One inverted list. Per-entry codes are kept unpacked, structure-of-arrays.
struct Partition {
  std::vector<float> center;
  /// Unit projection direction; empty for kinds without LOD.
  std::vector<float> direction;
  UQParams uq;
  SQCodebook sq;
  std::vector<std::uint32_t> ids;
  /// ids.size() * n_B codes.
  std::vector<PQCode> pq_codes;
  std::vector<std::uint8_t> sq_codes;
  std::vector<std::int16_t> uq_codes;

  std::size_t size() const { return ids.size(); }
  std::span<const PQCode> codes(std::size_t entry, std::size_t n_B) const {
    return {pq_codes.data() + entry * n_B, n_B};
  }

  bool operator==(const Partition&) const = default;
};

struct Index {
  IndexKind kind = IndexKind::kMipsLodMsq;
  IndexConfig config;
  /// Dimension of stored centers and codebooks (input_dim + 1 after the l2 transform).
  std::size_t dim = 0;
  std::size_t input_dim = 0;
  bool l2_transformed = false;
  /// U = max row norm used by the MIPS-to-l2 transform.
  double l2_max_norm = 0.0;
  /// Seed the index was built with; recorded for experiment bookkeeping.
  std::uint64_t seed = 0;
  Rotation rotation;
  PQCodebook pq;
  std::vector<Partition> partitions;

  std::size_t total_entries() const;
  VQCodebook centers() const;

  bool operator==(const Index&) const = default;
};

/// The proposed method's index; baselines share the same container.
using LodMsqIndex = Index;

enum class ProjDirMode { kCenter, kQueryPca };

/// Pre-trained components. Any component given here is used as-is instead of
/// being trained; the encoding steps still run.
struct ModelOverrides {
  std::optional<VQCodebook> coarse;
  std::optional<std::vector<std::vector<float>>> directions;
  std::optional<std::pair<Rotation, PQCodebook>> quantizer;
  std::optional<std::vector<SQCodebook>> sq;
  std::optional<std::vector<UQParams>> uq;
};

struct BuildOptions {
  int vq_iters = 20;
  int pq_iters = 10;
  int opq_iters = 20;
  int opq_refine_iters = 4;
  /// Rows used to train the PQ/OPQ stage; 0 means all.
  std::size_t train_sample = 0;
  ClipQuantiles clip;
  ProjDirMode proj_dir = ProjDirMode::kCenter;
  /// Training queries for ProjDirMode::kQueryPca.
  const Dataset* pca_queries = nullptr;
  int threads = 1;
  ModelOverrides overrides;
};

struct BuildReport {
  /// Unquantized scale per entry, aligned with Partition::ids.
  std::vector<std::vector<double>> exact_lambda;
  /// Entries whose orthogonal component (or residual) was exactly zero.
  std::size_t zero_component = 0;
  /// Entries whose scale denominator vanished.
  std::size_t degenerate_scale = 0;
  /// Partitions that fell back to the center direction in query-PCA mode.
  std::size_t pca_fallbacks = 0;
  std::vector<double> opq_objective;
  bool svd_fallback = false;
};

/// Builds a LOD+MSQ index.
///
/// IVF partitioning, a per-partition direction, normalized orthogonal
/// components, one global OPQ, then per partition: norm-preserving scales
/// with SQ, the leak-adjusted projected value z and its UQ.
Index build_index(const Dataset& data, const IndexConfig& config, const BuildOptions& options,
                  std::uint64_t seed, BuildReport* report = nullptr);

/// Shared builder for every MIPS kind except the l2 transform step.
Index build_ivf_index(IndexKind kind, const Dataset& data, const IndexConfig& config,
                      const BuildOptions& options, std::uint64_t seed,
                      BuildReport* report = nullptr);

/// Every trained component of `index` as a frozen model for build_ivf_index.
ModelOverrides overrides_from_index(const Index& index);

/// phi_SQ(lambda) R phi_PQ(o_hat) for one entry (scale 1 for kinds without SQ).
std::vector<double> msq_reconstruct(const Index& index, const Partition& partition,
                                    std::size_t entry);

/// Full approximate residual: msq_reconstruct + phi_UQ(z) v.
std::vector<double> reconstruct_residual(const Index& index, const Partition& partition,
                                         std::size_t entry);

}  // namespace lodmsq
