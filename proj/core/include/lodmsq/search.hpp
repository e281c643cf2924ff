#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lodmsq/dataset.hpp"
#include "lodmsq/index.hpp"

namespace lodmsq {

/// table[b][j] = (R^T q restricted to subspace b) . codeword_j
struct LookupTables {
  std::size_t n_B = 0;
  std::size_t n_W = 0;
  std::vector<double> values;

  double at(std::size_t b, std::size_t j) const { return values[b * n_W + j]; }
};

struct PartitionScore {
  /// q . c_i, or -||q - c_i||^2 for l2 partition selection.
  double score = 0.0;
  std::uint32_t partition = 0;
};

/// Descending by score, then ascending id; length <= k.
using SearchResult = std::vector<Neighbor>;

/// Bounded top-k collector with deterministic (score desc, id asc) order.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}
  void push(std::uint32_t id, double score);
  /// Drains the collector into ranked order.
  SearchResult take();
  std::size_t size() const { return heap_.size(); }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

/// Top m_ADC partitions by q . c_i; ties go to the smaller index.
std::vector<PartitionScore> select_partitions(std::span<const float> q, const Index& index,
                                              std::size_t m_ADC);

LookupTables build_adc_tables(std::span<const double> q_rotated, const PQCodebook& pq);

/// Sum of table lookups over subspaces.
double adc_ip(const LookupTables& tables, std::span<const PQCode> codes);

/// Approximate q . r_x for one entry, written as
/// phi_SQ(lambda) * ADC + (q . v) * phi_UQ(z). Excludes the center term q . c.
double score_entry(std::span<const float> q, const Index& index, const Partition& partition,
                   std::size_t entry, const LookupTables& tables);

/// m / 10, at least 1.
std::size_t default_m_adc(std::size_t m);

/// Approximate top-k inner products for any MIPS-ranked kind (everything but L2_OPQ).
SearchResult search(std::span<const float> q, std::size_t k, const Index& index,
                    std::size_t m_ADC);

std::vector<SearchResult> batch_search(const Index& index, const Dataset& queries, std::size_t k,
                                       std::size_t m_ADC, int threads = 1);

struct CostBits {
  std::uint64_t without_scale = 0;
  std::uint64_t with_scale = 0;
};

/// Bits read while scanning the given partitions.
CostBits search_cost_bits(const Index& index, std::span<const PartitionScore> selected);

}  // namespace lodmsq
