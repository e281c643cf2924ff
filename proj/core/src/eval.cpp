#include "lodmsq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "lodmsq/baselines.hpp"
#include "lodmsq/error.hpp"
#include "lodmsq/random.hpp"

namespace lodmsq {

double recall_n_at_k(const std::vector<SearchResult>& results, const GroundTruth& gt,
                     std::size_t n, std::size_t k) {
  if (n == 0) throw InvalidArgument("recall: n must be >= 1");
  if (n > k) throw InvalidArgument("recall: n=" + std::to_string(n) + " exceeds k=" + std::to_string(k));
  if (results.size() != gt.size()) throw InvalidArgument("recall: result and ground-truth counts differ");
  if (results.empty()) throw InvalidArgument("recall: no queries");
  double total = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    if (gt[q].size() < n) {
      throw InvalidArgument("recall: ground truth depth " + std::to_string(gt[q].size()) +
                            " is shallower than n=" + std::to_string(n));
    }
    std::unordered_set<std::uint32_t> truth;
    for (std::size_t i = 0; i < n; ++i) truth.insert(gt[q][i].id);
    std::size_t hit = 0;
    const std::size_t lim = std::min(k, results[q].size());
    for (std::size_t i = 0; i < lim; ++i) hit += truth.count(results[q][i].id);
    total += static_cast<double>(hit) / static_cast<double>(n);
  }
  return total / static_cast<double>(results.size());
}

int bitrate_per_entry(const IndexConfig& config, IndexKind kind) {
  return entry_bits(config, kind).payload;
}

void validate_parity(const std::vector<KindConfig>& entries) {
  if (entries.empty()) return;
  const int ref = bitrate_per_entry(entries.front().config, entries.front().kind);
  for (const auto& e : entries) {
    const int b = bitrate_per_entry(e.config, e.kind);
    if (b != ref) {
      throw InvalidArgument("bit budgets differ: " + std::string(kind_name(entries.front().kind)) +
                            " uses " + std::to_string(ref) + " bits/entry, " +
                            std::string(kind_name(e.kind)) + " uses " + std::to_string(b));
    }
  }
}

IndexConfig config_for_budget(IndexKind kind, int budget_bits, std::size_t m, std::size_t n_W,
                              int l_UQ, int l_SQ) {
  IndexConfig c;
  c.m = m;
  c.n_W = n_W;
  c.l_UQ = l_UQ;
  c.l_SQ = l_SQ;
  c.n_B = 1;
  const int code_bits = entry_bits(c, IndexKind::kMipsPq).payload;
  const int rest = budget_bits - (uses_lod(kind) ? l_UQ : 0);
  if (rest <= 0 || rest % code_bits != 0) {
    throw InvalidArgument("budget of " + std::to_string(budget_bits) + " bits is not reachable for " +
                          std::string(kind_name(kind)) + " with n_W=" + std::to_string(n_W) +
                          (uses_lod(kind) ? " and l_UQ=" + std::to_string(l_UQ) : std::string()));
  }
  c.n_B = static_cast<std::size_t>(rest / code_bits);
  return c;
}

std::optional<std::string> partition_size_warning(std::size_t n, std::size_t m) {
  if (m == 0) return std::nullopt;
  const double avg = static_cast<double>(n) / static_cast<double>(m);
  if (avg >= 500.0 && avg <= 2000.0) return std::nullopt;
  char buf[160];
  std::snprintf(buf, sizeof buf, "average partition size N/m = %.1f is far from the ~1000 guideline", avg);
  return std::string(buf);
}

RecallReport run_grid(const Dataset& data, const Dataset& queries, const GroundTruth& gt,
                      const GridSpec& spec) {
  if (spec.kinds.empty() || spec.budgets.empty() || spec.ks.empty() || spec.seeds.empty()) {
    throw InvalidArgument("run_grid: kinds, budgets, ks and seeds must be non-empty");
  }
  const std::size_t m_adc = spec.m_ADC == 0 ? default_m_adc(spec.m) : spec.m_ADC;
  if (m_adc > spec.m) throw InvalidArgument("m_ADC exceeds m");
  const std::size_t kmax = *std::max_element(spec.ks.begin(), spec.ks.end());
  for (auto k : spec.ks) {
    if (k < spec.n) throw InvalidArgument("every k must be >= n");
  }

  // Validate every cell before doing any work.
  for (int budget : spec.budgets) {
    std::vector<KindConfig> cell;
    for (auto kind : spec.kinds) {
      cell.push_back({kind, config_for_budget(kind, budget, spec.m, spec.n_W, spec.l_UQ, spec.l_SQ)});
      validate_config(cell.back().config, kind, data.dim() + (kind == IndexKind::kL2Opq ? 1 : 0));
    }
    validate_parity(cell);
  }

  RecallReport report;
  if (auto w = partition_size_warning(data.size(), spec.m)) report.warnings.push_back(*w);

  for (auto seed : spec.seeds) {
    const VQCodebook coarse = train_vq(data, spec.m, spec.build.vq_iters, stream_seed(seed, 1),
                                       spec.build.threads);
    for (int budget : spec.budgets) {
      for (auto kind : spec.kinds) {
        const IndexConfig cfg =
            config_for_budget(kind, budget, spec.m, spec.n_W, spec.l_UQ, spec.l_SQ);
        BuildOptions opt = spec.build;
        if (kind != IndexKind::kL2Opq) opt.overrides.coarse = coarse;
        const Index idx = build_baseline(kind, data, cfg, opt, seed);
        const auto results = batch_search_baseline(idx, queries, kmax, m_adc, spec.build.threads);
        for (auto k : spec.ks) {
          RecallRow row;
          row.dataset = spec.dataset;
          row.kind = kind;
          row.bits = budget;
          row.config = cfg;
          row.m_ADC = m_adc;
          row.seed = seed;
          row.n = spec.n;
          row.k = k;
          row.recall = recall_n_at_k(results, gt, spec.n, k);
          report.rows.push_back(row);
        }
      }
    }
  }
  return report;
}

void write_recall_csv(const std::vector<RecallRow>& rows, std::ostream& out) {
  out << kRecallCsvHeader << '\n';
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.recall);
    out << r.dataset << ',' << kind_name(r.kind) << ',' << r.bits << ',' << r.config.m << ','
        << r.m_ADC << ',' << r.config.n_B << ',' << r.config.n_W << ',' << r.config.l_UQ << ','
        << r.config.l_SQ << ',' << r.seed << ',' << r.n << ',' << r.k << ',' << buf << '\n';
  }
}

std::vector<RecallRow> average_over_seeds(const std::vector<RecallRow>& rows) {
  std::vector<RecallRow> out;
  std::map<std::tuple<int, int, std::size_t>, std::pair<std::size_t, std::size_t>> slot;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(static_cast<int>(r.kind), r.bits, r.k);
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot[key] = {out.size(), 1};
      out.push_back(r);
      out.back().seed = 0;
    } else {
      out[it->second.first].recall += r.recall;
      ++it->second.second;
    }
  }
  for (const auto& [key, s] : slot) out[s.first].recall /= static_cast<double>(s.second);
  return out;
}

GroundTruthFiles ground_truth_cache_paths(const std::filesystem::path& dataset_path,
                                          const Dataset& data, const Dataset& queries,
                                          std::size_t depth) {
  const std::uint64_t h = dataset_hash(queries, dataset_hash(data));
  char tag[64];
  std::snprintf(tag, sizeof tag, ".gt-%016llx-%zu", static_cast<unsigned long long>(h), depth);
  const auto base = dataset_path.parent_path() / (dataset_path.stem().string() + tag);
  return {base.string() + ".ivecs", base.string() + ".fvecs"};
}

void save_ground_truth(const GroundTruth& gt, const GroundTruthFiles& files) {
  std::vector<std::vector<std::int32_t>> ids(gt.size());
  std::vector<std::vector<float>> scores(gt.size());
  for (std::size_t q = 0; q < gt.size(); ++q) {
    for (const auto& nb : gt[q]) {
      ids[q].push_back(static_cast<std::int32_t>(nb.id));
      scores[q].push_back(static_cast<float>(nb.score));
    }
  }
  save_ivecs(ids, files.ids);
  save_fvecs_rows(scores, files.scores);
}

GroundTruth load_ground_truth(const GroundTruthFiles& files) {
  const auto ids = load_ivecs(files.ids);
  const auto scores = load_fvecs_rows(files.scores);
  if (ids.size() != scores.size()) throw FormatError("ground-truth id and score files disagree");
  GroundTruth gt(ids.size());
  for (std::size_t q = 0; q < ids.size(); ++q) {
    if (ids[q].size() != scores[q].size()) throw FormatError("ground-truth row length mismatch");
    for (std::size_t i = 0; i < ids[q].size(); ++i) {
      if (ids[q][i] < 0) throw FormatError("negative id in ground truth");
      gt[q].push_back({static_cast<std::uint32_t>(ids[q][i]), scores[q][i]});
    }
  }
  return gt;
}

GroundTruth cached_ground_truth(const std::filesystem::path& dataset_path, const Dataset& data,
                                const Dataset& queries, std::size_t depth, int threads,
                                bool* cache_hit) {
  const auto files = ground_truth_cache_paths(dataset_path, data, queries, depth);
  if (std::filesystem::exists(files.ids) && std::filesystem::exists(files.scores)) {
    try {
      auto gt = load_ground_truth(files);
      if (gt.size() == queries.size()) {
        if (cache_hit) *cache_hit = true;
        return gt;
      }
    } catch (const Error&) {
      // stale or damaged cache: recompute
    }
  }
  if (cache_hit) *cache_hit = false;
  auto gt = brute_force_ground_truth(data, queries, depth, threads);
  save_ground_truth(gt, files);
  // Scores are cached as float32; return what a later hit would return.
  for (auto& row : gt) {
    for (auto& n : row) n.score = static_cast<float>(n.score);
  }
  return gt;
}

}  // namespace lodmsq
