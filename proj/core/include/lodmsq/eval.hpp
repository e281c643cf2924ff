#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lodmsq/dataset.hpp"
#include "lodmsq/index.hpp"
#include "lodmsq/search.hpp"

namespace lodmsq {

/// Mean over queries of |true top-n ∩ first k retrieved| / n.
///
/// Result lists shorter than k are used as-is. Throws when n > k, n == 0,
/// the query counts differ, or a ground-truth row has fewer than n entries.
double recall_n_at_k(const std::vector<SearchResult>& results, const GroundTruth& gt,
                     std::size_t n, std::size_t k);

/// Stored bits per entry excluding the scale code (see entry_bits for both parts).
int bitrate_per_entry(const IndexConfig& config, IndexKind kind);

struct KindConfig {
  IndexKind kind;
  IndexConfig config;
};

/// Throws InvalidArgument unless every entry has the same bitrate_per_entry.
void validate_parity(const std::vector<KindConfig>& entries);

/// n_B for a bit budget: (budget - l_UQ for LOD kinds) / ceil(log2 n_W), which must divide exactly.
IndexConfig config_for_budget(IndexKind kind, int budget_bits, std::size_t m, std::size_t n_W,
                              int l_UQ, int l_SQ);

struct GridSpec {
  std::string dataset = "dataset";
  std::vector<IndexKind> kinds;
  std::vector<int> budgets;
  std::vector<std::size_t> ks;
  std::vector<std::uint64_t> seeds;
  std::size_t m = 20;
  /// 0 selects default_m_adc(m).
  std::size_t m_ADC = 0;
  std::size_t n_W = 16;
  int l_UQ = 8;
  int l_SQ = 4;
  /// recall-n@k; 1 is recall1@k.
  std::size_t n = 1;
  BuildOptions build;
};

struct RecallRow {
  std::string dataset;
  IndexKind kind;
  int bits = 0;
  IndexConfig config;
  std::size_t m_ADC = 0;
  std::uint64_t seed = 0;
  std::size_t n = 1;
  std::size_t k = 1;
  double recall = 0.0;
};

struct RecallReport {
  std::vector<RecallRow> rows;
  /// Advisory messages, e.g. average partition size far from 1000.
  std::vector<std::string> warnings;
};

/// Builds one index per (seed, budget, kind), searches once with max(ks) and
/// evaluates every k. Rows come out in (seed, budget, kind, k) order. The
/// coarse quantizer is trained once per seed and shared by all kinds that do
/// not transform the data.
RecallReport run_grid(const Dataset& data, const Dataset& queries, const GroundTruth& gt,
                      const GridSpec& spec);

inline constexpr const char* kRecallCsvHeader =
    "dataset,kind,bits,m,m_ADC,n_B,n_W,l_UQ,l_SQ,seed,n,k,recall";

void write_recall_csv(const std::vector<RecallRow>& rows, std::ostream& out);

/// Mean recall per (kind, bits, k) over seeds.
std::vector<RecallRow> average_over_seeds(const std::vector<RecallRow>& rows);

/// Warning text when N/m is outside [500, 2000], otherwise empty.
std::optional<std::string> partition_size_warning(std::size_t n, std::size_t m);

struct GroundTruthFiles {
  std::filesystem::path ids;
  std::filesystem::path scores;
};

/// <dataset stem>.gt-<hash>-<depth>.{ivecs,fvecs} next to the dataset file.
GroundTruthFiles ground_truth_cache_paths(const std::filesystem::path& dataset_path,
                                          const Dataset& data, const Dataset& queries,
                                          std::size_t depth);

void save_ground_truth(const GroundTruth& gt, const GroundTruthFiles& files);
GroundTruth load_ground_truth(const GroundTruthFiles& files);

/// Loads the cached ground truth or computes and caches it.
GroundTruth cached_ground_truth(const std::filesystem::path& dataset_path, const Dataset& data,
                                const Dataset& queries, std::size_t depth, int threads,
                                bool* cache_hit = nullptr);

}  // namespace lodmsq
