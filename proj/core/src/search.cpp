#include "lodmsq/search.hpp"

#include <algorithm>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/kernels.hpp"
#include "lodmsq/parallel.hpp"

namespace lodmsq {

namespace {
// Heap comparator: the worst kept candidate is at the front.
bool heap_less(const Neighbor& a, const Neighbor& b) { return ranks_before(a, b); }
}  // namespace

void TopK::push(std::uint32_t id, double score) {
  if (k_ == 0) return;
  const Neighbor cand{id, score};
  if (heap_.size() < k_) {
    heap_.push_back(cand);
    std::push_heap(heap_.begin(), heap_.end(), heap_less);
  } else if (ranks_before(cand, heap_.front())) {
    std::pop_heap(heap_.begin(), heap_.end(), heap_less);
    heap_.back() = cand;
    std::push_heap(heap_.begin(), heap_.end(), heap_less);
  }
}

SearchResult TopK::take() {
  std::sort_heap(heap_.begin(), heap_.end(), heap_less);
  SearchResult out;
  out.swap(heap_);
  return out;
}

std::vector<PartitionScore> select_partitions(std::span<const float> q, const Index& index,
                                              std::size_t m_ADC) {
  const std::size_t m = index.partitions.size();
  if (q.size() != index.dim) throw InvalidArgument("query dim does not match index dim");
  if (m_ADC > m) {
    throw InvalidArgument("m_ADC=" + std::to_string(m_ADC) + " exceeds m=" + std::to_string(m));
  }
  std::vector<PartitionScore> all(m);
  for (std::size_t i = 0; i < m; ++i) {
    all[i] = {dot(q.data(), index.partitions[i].center.data(), index.dim),
              static_cast<std::uint32_t>(i)};
  }
  auto better = [](const PartitionScore& a, const PartitionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.partition < b.partition;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m_ADC), all.end(), better);
  all.resize(m_ADC);
  return all;
}

LookupTables build_adc_tables(std::span<const double> q_rotated, const PQCodebook& pq) {
  if (q_rotated.size() != pq.dim) throw InvalidArgument("build_adc_tables: dim mismatch");
  LookupTables t{pq.n_B, pq.n_W, std::vector<double>(pq.n_B * pq.n_W)};
  for (std::size_t b = 0; b < pq.n_B; ++b) {
    const double* qs = q_rotated.data() + pq.offsets[b];
    const std::size_t w = pq.sub_dim(b);
    for (std::size_t j = 0; j < pq.n_W; ++j) {
      const float* cw = pq.codebooks[b].data() + j * w;
      double s = 0.0;
      for (std::size_t k = 0; k < w; ++k) s += qs[k] * cw[k];
      t.values[b * pq.n_W + j] = s;
    }
  }
  return t;
}

double adc_ip(const LookupTables& t, std::span<const PQCode> codes) {
  double s = 0.0;
  for (std::size_t b = 0; b < t.n_B; ++b) s += t.values[b * t.n_W + codes[b]];
  return s;
}

double score_entry(std::span<const float> q, const Index& index, const Partition& p,
                   std::size_t entry, const LookupTables& tables) {
  double s = adc_ip(tables, p.codes(entry, index.config.n_B));
  if (uses_scale(index.kind)) s *= p.sq.levels.at(p.sq_codes.at(entry));
  if (uses_lod(index.kind)) {
    const double qv = dot(q.data(), p.direction.data(), index.dim);
    s += qv * decode_uq(p.uq, p.uq_codes.at(entry));
  }
  return s;
}

std::size_t default_m_adc(std::size_t m) { return std::max<std::size_t>(1, m / 10); }

SearchResult search(std::span<const float> q, std::size_t k, const Index& index,
                    std::size_t m_ADC) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (index.kind == IndexKind::kL2Opq) {
    throw InvalidArgument("L2_OPQ indices rank by distance; use search_baseline");
  }
  const auto selected = select_partitions(q, index, m_ADC);
  std::vector<double> q_r(index.dim);
  index.rotation.apply_transpose(q, q_r);
  const LookupTables tables = build_adc_tables(q_r, index.pq);
  const bool lod = uses_lod(index.kind);
  const bool scaled = uses_scale(index.kind);
  const std::size_t n_B = index.config.n_B;
  const std::size_t n_W = index.config.n_W;

  TopK top(k);
  for (const auto& sel : selected) {
    const Partition& p = index.partitions[sel.partition];
    // Per-partition constants: (q.v) a_P multiplies the integer code, (q.v) b_P is folded in.
    double alpha = 0.0, beta = 0.0;
    if (lod) {
      const double qv = dot(q.data(), p.direction.data(), index.dim);
      alpha = qv * p.uq.step;
      beta = qv * p.uq.offset;
    }
    const double base = sel.score + beta;
    const PQCode* codes = p.pq_codes.data();
    for (std::size_t e = 0; e < p.size(); ++e, codes += n_B) {
      double adc = 0.0;
      for (std::size_t b = 0; b < n_B; ++b) adc += tables.values[b * n_W + codes[b]];
      double s = base + (scaled ? p.sq.levels[p.sq_codes[e]] * adc : adc);
      if (lod) s += alpha * p.uq_codes[e];
      top.push(p.ids[e], s);
    }
  }
  return top.take();
}

std::vector<SearchResult> batch_search(const Index& index, const Dataset& queries, std::size_t k,
                                       std::size_t m_ADC, int threads) {
  std::vector<SearchResult> out(queries.size());
  parallel_for(queries.size(), threads,
               [&](std::size_t i) { out[i] = search(queries.row(i), k, index, m_ADC); });
  return out;
}

CostBits search_cost_bits(const Index& index, std::span<const PartitionScore> selected) {
  const EntryBits bits = entry_bits(index.config, index.kind);
  CostBits c;
  for (const auto& s : selected) {
    const std::uint64_t n = index.partitions.at(s.partition).size();
    c.without_scale += n * static_cast<std::uint64_t>(bits.payload);
    c.with_scale += n * static_cast<std::uint64_t>(bits.payload + bits.scale);
  }
  return c;
}

}  // namespace lodmsq
