#include "lodmsq/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/kernels.hpp"
#include "lodmsq/parallel.hpp"

namespace lodmsq {

Dataset mips_to_l2_transform(const Dataset& data, double* max_norm) {
  if (data.empty()) throw InvalidArgument("mips_to_l2_transform: empty dataset");
  const std::size_t d = data.dim();
  std::vector<double> norms(data.size());
  double u = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    norms[i] = std::sqrt(dot_exact(data.row(i), data.row(i)));
    u = std::max(u, norms[i]);
  }
  if (max_norm) *max_norm = u;
  Dataset out(data.size(), d + 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    auto y = out.row(i);
    if (u == 0.0) {
      y[d] = 1.0f;
      continue;
    }
    for (std::size_t k = 0; k < d; ++k) y[k] = static_cast<float>(x[k] / u);
    const double t = norms[i] / u;
    y[d] = static_cast<float>(std::sqrt(std::max(0.0, 1.0 - t * t)));
  }
  return out;
}

std::vector<float> transform_query(std::span<const float> q) {
  const double n = std::sqrt(dot_exact(q, q));
  if (n == 0.0) throw InvalidArgument("transform_query: zero-norm query");
  std::vector<float> out(q.size() + 1, 0.0f);
  for (std::size_t k = 0; k < q.size(); ++k) out[k] = static_cast<float>(q[k] / n);
  return out;
}

bool is_unit_normalized(const Dataset& data, double tol) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::abs(std::sqrt(dot_exact(data.row(i), data.row(i))) - 1.0) > tol) return false;
  }
  return true;
}

Index build_baseline(IndexKind kind, const Dataset& data, const IndexConfig& config,
                     const BuildOptions& options, std::uint64_t seed, BuildReport* report) {
  if (kind == IndexKind::kMipsLodMsq) return build_index(data, config, options, seed, report);
  if (kind != IndexKind::kL2Opq) return build_ivf_index(kind, data, config, options, seed, report);

  if (is_unit_normalized(data)) {
    Index idx = build_ivf_index(IndexKind::kL2Opq, data, config, options, seed, report);
    idx.l2_transformed = false;
    idx.l2_max_norm = 1.0;
    return idx;
  }
  double u = 0.0;
  const Dataset transformed = mips_to_l2_transform(data, &u);
  BuildOptions opt = options;
  opt.proj_dir = ProjDirMode::kCenter;
  opt.pca_queries = nullptr;
  Index idx = build_ivf_index(IndexKind::kL2Opq, transformed, config, opt, seed, report);
  idx.input_dim = data.dim();
  idx.l2_transformed = true;
  idx.l2_max_norm = u;
  return idx;
}

namespace {

std::vector<float> l2_query(const Index& index, std::span<const float> q) {
  if (q.size() != index.input_dim) throw InvalidArgument("query dim does not match index");
  if (index.l2_transformed) return transform_query(q);
  return {q.begin(), q.end()};
}

std::vector<PartitionScore> select_l2(const Index& index, std::span<const float> qh,
                                      std::size_t m_ADC) {
  const std::size_t m = index.partitions.size();
  if (m_ADC > m) {
    throw InvalidArgument("m_ADC=" + std::to_string(m_ADC) + " exceeds m=" + std::to_string(m));
  }
  std::vector<PartitionScore> all(m);
  for (std::size_t i = 0; i < m; ++i) {
    const float* c = index.partitions[i].center.data();
    double s = 0.0;
    for (std::size_t k = 0; k < index.dim; ++k) {
      const double t = static_cast<double>(qh[k]) - c[k];
      s += t * t;
    }
    all[i] = {-s, static_cast<std::uint32_t>(i)};
  }
  auto better = [](const PartitionScore& a, const PartitionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.partition < b.partition;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m_ADC), all.end(), better);
  all.resize(m_ADC);
  return all;
}

SearchResult search_l2(const Index& index, std::span<const float> q, std::size_t k,
                       std::size_t m_ADC) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  const auto qh = l2_query(index, q);
  const auto selected = select_l2(index, qh, m_ADC);
  const PQCodebook& pq = index.pq;
  const std::size_t d = index.dim;

  // ||w||^2 per codeword, shared by every partition.
  LookupTables norms{pq.n_B, pq.n_W, std::vector<double>(pq.n_B * pq.n_W)};
  for (std::size_t b = 0; b < pq.n_B; ++b) {
    for (std::size_t j = 0; j < pq.n_W; ++j) {
      const auto w = pq.codeword(b, j);
      double s = 0.0;
      for (float v : w) s += static_cast<double>(v) * v;
      norms.values[b * pq.n_W + j] = s;
    }
  }

  TopK top(k);
  std::vector<float> diff(d);
  std::vector<double> diff_r(d);
  for (const auto& sel : selected) {
    const Partition& p = index.partitions[sel.partition];
    for (std::size_t t = 0; t < d; ++t) diff[t] = qh[t] - p.center[t];
    index.rotation.apply_transpose(diff, diff_r);
    // ||q - c - R y||^2 = ||q - c||^2 - 2 (R^T(q - c)) . y + ||y||^2
    const LookupTables cross = build_adc_tables(diff_r, pq);
    const double base = -sel.score;
    for (std::size_t e = 0; e < p.size(); ++e) {
      const auto codes = p.codes(e, pq.n_B);
      const double dist = base - 2.0 * adc_ip(cross, codes) + adc_ip(norms, codes);
      top.push(p.ids[e], -dist);
    }
  }
  return top.take();
}

}  // namespace

std::vector<PartitionScore> select_partitions_any(const Index& index, std::span<const float> q,
                                                  std::size_t m_ADC) {
  if (index.kind == IndexKind::kL2Opq) return select_l2(index, l2_query(index, q), m_ADC);
  return select_partitions(q, index, m_ADC);
}

SearchResult search_baseline(const Index& index, std::span<const float> q, std::size_t k,
                             std::size_t m_ADC) {
  if (index.kind == IndexKind::kL2Opq) return search_l2(index, q, k, m_ADC);
  return search(q, k, index, m_ADC);
}

std::vector<SearchResult> batch_search_baseline(const Index& index, const Dataset& queries,
                                                std::size_t k, std::size_t m_ADC, int threads) {
  std::vector<SearchResult> out(queries.size());
  parallel_for(queries.size(), threads,
               [&](std::size_t i) { out[i] = search_baseline(index, queries.row(i), k, m_ADC); });
  return out;
}

}  // namespace lodmsq
