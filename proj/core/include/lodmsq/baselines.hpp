#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lodmsq/dataset.hpp"
#include "lodmsq/index.hpp"
#include "lodmsq/search.hpp"

namespace lodmsq {

using BaselineKind = IndexKind;

/// x_hat = [x / U; sqrt(1 - (||x|| / U)^2)] with U the largest row norm.
Dataset mips_to_l2_transform(const Dataset& data, double* max_norm = nullptr);

/// q_hat = [q / ||q||; 0]. Throws for a zero query.
std::vector<float> transform_query(std::span<const float> q);

/// True when every row has unit norm within `tol`.
bool is_unit_normalized(const Dataset& data, double tol = 1e-4);

/// Builds any of the comparison pipelines. MIPS_LOD_MSQ delegates to build_index.
///
/// L2_OPQ applies the MIPS-to-l2 transform unless the data is already unit
/// normalized, in which case the raw vectors are indexed.
Index build_baseline(IndexKind kind, const Dataset& data, const IndexConfig& config,
                     const BuildOptions& options, std::uint64_t seed,
                     BuildReport* report = nullptr);

/// Same contract as search(); L2_OPQ selects partitions by smallest ||q_hat - c||^2
/// and reports score = -(approximate squared distance).
SearchResult search_baseline(const Index& index, std::span<const float> q, std::size_t k,
                             std::size_t m_ADC);

/// Partition selection matching the index kind.
std::vector<PartitionScore> select_partitions_any(const Index& index, std::span<const float> q,
                                                  std::size_t m_ADC);

std::vector<SearchResult> batch_search_baseline(const Index& index, const Dataset& queries,
                                                std::size_t k, std::size_t m_ADC,
                                                int threads = 1);

}  // namespace lodmsq
