#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cfloat>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "lodmsq/baselines.hpp"
#include "lodmsq/dataset.hpp"
#include "lodmsq/error.hpp"
#include "lodmsq/eval.hpp"
#include "lodmsq/index.hpp"
#include "lodmsq/index_io.hpp"
#include "lodmsq/parallel.hpp"
#include "lodmsq/random.hpp"
#include "lodmsq/search.hpp"
#include "lodmsq/synthetic.hpp"
#include "lodmsq/theory.hpp"

namespace fs = std::filesystem;

namespace lodmsq::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kParamFooter =
    "Indexing and search parameters:\n"
    "  m       number of partitions in the inverted file (--m)\n"
    "  n_B     number of PQ codebooks (--n_B, or --bits to derive it)\n"
    "  n_W     codewords per PQ codebook (--n_W, default 16)\n"
    "  l_UQ    bits per UQ code of the projected component (--l_UQ, default 8)\n"
    "  l_SQ    bits per SQ code of the scale (--l_SQ, default 4)\n"
    "  m_ADC   partitions scanned per query (--m_ADC, default max(1, m/10))\n"
    "\n"
    "Exit codes: 0 ok, 1 runtime error, 2 usage or configuration error.";

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw UsageError(std::string(what) + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

std::vector<IndexKind> parse_kinds(const std::string& text) {
  std::vector<IndexKind> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_kind(item));
  }
  if (out.empty()) throw UsageError("--kinds: empty list");
  return out;
}

Dataset load_input(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw UsageError(std::string(flag) + ": file not found: " + path);
  return load_fvecs(path);
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw UsageError(std::string(flag) + ": file not found: " + path);
}

int resolve_threads(int t) { return t <= 0 ? default_thread_count() : t; }

// Output stream that is either a file or `out` for "-".
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw IoError("cannot open " + path + " for writing");
      os_ = &file_;
    }
  }
  std::ostream& get() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

struct BuildFlags {
  std::string kind = "LOD_MSQ";
  std::size_t m = 20;
  std::size_t n_B = 0;
  int bits = 0;
  std::size_t n_W = 16;
  int l_UQ = 8;
  int l_SQ = 4;
  int vq_iters = 20;
  int pq_iters = 10;
  int opq_iters = 20;
  int opq_refine_iters = 4;
  std::size_t train_sample = 0;
  double clip_low = 0.01;
  double clip_high = 0.99;
  std::string proj_dir = "center";
  std::string pca_queries;
};

void add_index_params(CLI::App* sc, BuildFlags& f, bool with_kind) {
  if (with_kind) {
    sc->add_option("--kind", f.kind,
                   "MIPS_PQ, MIPS_OPQ, L2_OPQ, MIPS_MSQ, MIPS_LOD_OPQ or MIPS_LOD_MSQ")
        ->capture_default_str();
  }
  sc->add_option("--m", f.m, "number of partitions in the inverted file")->capture_default_str();
  sc->add_option("--n_B", f.n_B, "number of PQ codebooks (subspaces)");
  sc->add_option("--bits", f.bits, "per-entry bit budget; derives n_B for the kind");
  sc->add_option("--n_W", f.n_W, "codewords per PQ codebook")->capture_default_str();
  sc->add_option("--l_UQ", f.l_UQ, "bits per UQ code of the projected component")->capture_default_str();
  sc->add_option("--l_SQ", f.l_SQ, "bits per SQ code of the per-vector scale")->capture_default_str();
  sc->add_option("--vq-iters", f.vq_iters, "Lloyd iterations for the coarse quantizer")->capture_default_str();
  sc->add_option("--pq-iters", f.pq_iters, "Lloyd iterations per PQ subspace")->capture_default_str();
  sc->add_option("--opq-iters", f.opq_iters, "OPQ outer iterations")->capture_default_str();
  sc->add_option("--opq-refine-iters", f.opq_refine_iters, "Lloyd iterations per OPQ outer iteration")
      ->capture_default_str();
  sc->add_option("--train-sample", f.train_sample, "rows used to train PQ/OPQ (0 = all)")->capture_default_str();
  sc->add_option("--clip-low", f.clip_low, "lower quantile for UQ range")->capture_default_str();
  sc->add_option("--clip-high", f.clip_high, "upper quantile for UQ range")->capture_default_str();
  sc->add_option("--proj-dir", f.proj_dir, "projection direction: center or query_pca")->capture_default_str();
  sc->add_option("--pca-queries", f.pca_queries, "training queries (fvecs) for --proj-dir query_pca");
}

IndexConfig config_from_flags(const BuildFlags& f, IndexKind kind) {
  IndexConfig c;
  if (f.bits > 0) {
    if (f.n_B != 0) throw UsageError("give either --n_B or --bits, not both");
    c = config_for_budget(kind, f.bits, f.m, f.n_W, f.l_UQ, f.l_SQ);
  } else {
    c.m = f.m;
    c.n_B = f.n_B == 0 ? 23 : f.n_B;
    c.n_W = f.n_W;
    c.l_UQ = f.l_UQ;
    c.l_SQ = f.l_SQ;
  }
  return c;
}

BuildOptions options_from_flags(const BuildFlags& f, int threads, std::optional<Dataset>& pca_store) {
  BuildOptions o;
  o.vq_iters = f.vq_iters;
  o.pq_iters = f.pq_iters;
  o.opq_iters = f.opq_iters;
  o.opq_refine_iters = f.opq_refine_iters;
  o.train_sample = f.train_sample;
  if (!(f.clip_low >= 0.0 && f.clip_low < f.clip_high && f.clip_high <= 1.0)) {
    throw UsageError("clip quantiles must satisfy 0 <= low < high <= 1");
  }
  o.clip = {f.clip_low, f.clip_high};
  o.threads = threads;
  if (f.proj_dir == "center") {
    o.proj_dir = ProjDirMode::kCenter;
  } else if (f.proj_dir == "query_pca") {
    o.proj_dir = ProjDirMode::kQueryPca;
    pca_store = load_input(f.pca_queries, "--pca-queries");
    o.pca_queries = &*pca_store;
  } else {
    throw UsageError("--proj-dir must be 'center' or 'query_pca'");
  }
  return o;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// key=value sidecar written next to search results.
void write_meta(const fs::path& path, const std::map<std::string, std::string>& kv) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

std::map<std::string, std::string> read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : parse_flat_config(ss.str())) kv[k] = v;
  return kv;
}

// ---- subcommands ----

struct GenFlags {
  std::string type = "clustered";
  std::size_t n = 10000;
  std::size_t dim = 32;
  std::size_t clusters = 100;
  double center_std = 1.0;
  double point_std = 0.5;
  double mean_offset = 0.5;
  std::size_t queries = 1000;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string out_data, out_queries, out_model;
  std::string lossless_kind = "LOD_MSQ";
  std::size_t m = 16;
};

int cmd_gen(const GenFlags& f, std::ostream& out) {
  if (f.out_data.empty()) throw UsageError("--out-data is required");
  Dataset data, queries;
  if (f.type == "clustered") {
    ClusteredSpec s;
    s.n = f.n;
    s.dim = f.dim;
    s.clusters = f.clusters;
    s.center_std = f.center_std;
    s.point_std = f.point_std;
    s.mean_offset = f.mean_offset;
    s.seed = f.seed;
    data = make_clustered(s);
    queries = make_noisy_queries(data, f.queries, f.noise, stream_seed(f.seed, 20));
  } else if (f.type == "gaussian") {
    data = make_gaussian(f.n, f.dim, stream_seed(f.seed, 0));
    queries = make_gaussian(f.queries, f.dim, stream_seed(f.seed, 20));
  } else if (f.type == "lossless") {
    if (f.out_model.empty()) throw UsageError("--out-model is required for --type lossless");
    const IndexKind kind = parse_kind(f.lossless_kind);
    auto inst = make_lossless(kind, f.n, f.dim, f.m, f.seed);
    data = std::move(inst.data);
    queries = make_gaussian(f.queries, f.dim, stream_seed(f.seed, 20));
    // The frozen model is an index over zero rows.
    BuildOptions opt = inst.options;
    Index model;
    model.kind = kind;
    model.config = inst.config;
    model.dim = model.input_dim = f.dim;
    model.seed = f.seed;
    model.rotation = opt.overrides.quantizer->first;
    model.pq = opt.overrides.quantizer->second;
    model.partitions.resize(inst.config.m);
    for (std::size_t i = 0; i < inst.config.m; ++i) {
      auto& p = model.partitions[i];
      const auto c = opt.overrides.coarse->center(i);
      p.center.assign(c.begin(), c.end());
      if (uses_lod(kind)) {
        p.direction = (*opt.overrides.directions)[i];
        p.uq = (*opt.overrides.uq)[i];
      }
      if (uses_scale(kind)) p.sq = (*opt.overrides.sq)[i];
    }
    serialize_index(model, f.out_model);
  } else {
    throw UsageError("--type must be clustered, gaussian or lossless");
  }
  save_fvecs(data, f.out_data);
  if (!f.out_queries.empty() && !queries.empty()) save_fvecs(queries, f.out_queries);
  out << "wrote " << data.size() << " x " << data.dim() << " to " << f.out_data << '\n';
  return kExitOk;
}

struct GtFlags {
  std::string data, queries, out;
  std::size_t depth = 100;
  int threads = 0;
};

int cmd_gt(const GtFlags& f, std::ostream& out, std::ostream& err) {
  const Dataset data = load_input(f.data, "--data");
  const Dataset queries = load_input(f.queries, "--queries");
  if (f.depth < 1 || f.depth > data.size()) {
    throw UsageError("--depth=" + std::to_string(f.depth) + " must be in [1, N=" +
                     std::to_string(data.size()) + "]");
  }
  bool hit = false;
  const auto gt = cached_ground_truth(f.data, data, queries, f.depth, resolve_threads(f.threads), &hit);
  const auto files = ground_truth_cache_paths(f.data, data, queries, f.depth);
  err << (hit ? "ground truth cache hit: " : "ground truth computed: ") << files.ids.string() << '\n';
  if (!f.out.empty()) {
    save_ground_truth(gt, {f.out + ".ivecs", f.out + ".fvecs"});
    out << f.out << ".ivecs\n" << f.out << ".fvecs\n";
  } else {
    out << files.ids.string() << '\n' << files.scores.string() << '\n';
  }
  return kExitOk;
}

struct BuildCmd {
  BuildFlags b;
  std::string data, out, model;
  std::uint64_t seed = 0;
  int threads = 0;
};

int cmd_build(const BuildCmd& f, std::ostream& out, std::ostream& err) {
  if (f.out.empty()) throw UsageError("--out is required");
  const Dataset data = load_input(f.data, "--data");
  const IndexKind kind = parse_kind(f.b.kind);
  std::optional<Dataset> pca;
  BuildOptions opt = options_from_flags(f.b, resolve_threads(f.threads), pca);
  IndexConfig cfg = config_from_flags(f.b, kind);
  if (!f.model.empty()) {
    require_file(f.model, "--model");
    const Index model = deserialize_index(f.model);
    if (model.kind != kind) {
      throw UsageError("--model holds a " + std::string(kind_name(model.kind)) +
                       " model but --kind is " + std::string(kind_name(kind)));
    }
    cfg = model.config;
    opt.overrides = overrides_from_index(model);
  }
  validate_config(cfg, kind, data.dim() + (kind == IndexKind::kL2Opq ? 1 : 0));
  if (auto w = partition_size_warning(data.size(), cfg.m)) err << "warning: " << *w << '\n';
  BuildReport rep;
  const Index idx = build_baseline(kind, data, cfg, opt, f.seed, &rep);
  serialize_index(idx, f.out);
  const EntryBits bits = entry_bits(cfg, kind);
  out << "kind=" << kind_name(kind) << " N=" << data.size() << " d=" << data.dim()
      << " m=" << cfg.m << " n_B=" << cfg.n_B << " n_W=" << cfg.n_W;
  if (uses_lod(kind)) out << " l_UQ=" << cfg.l_UQ;
  if (uses_scale(kind)) out << " l_SQ=" << cfg.l_SQ;
  out << " bits/entry=" << bits.payload;
  if (bits.scale > 0) out << " (+" << bits.scale << " scale)";
  out << '\n';
  if (rep.zero_component > 0) err << "note: " << rep.zero_component << " entries had a zero component\n";
  if (rep.degenerate_scale > 0) err << "note: " << rep.degenerate_scale << " entries had a degenerate scale\n";
  if (rep.pca_fallbacks > 0) err << "note: " << rep.pca_fallbacks << " partitions fell back to the center direction\n";
  if (rep.svd_fallback) err << "warning: OPQ SVD failed; rotation fell back to identity\n";
  return kExitOk;
}

struct SearchCmd {
  std::string index, queries, out, dataset;
  std::size_t k = 10;
  std::size_t m_ADC = 0;
  int threads = 0;
};

int cmd_search(const SearchCmd& f, std::ostream& out) {
  if (f.out.empty()) throw UsageError("--out is required");
  require_file(f.index, "--index");
  const Index idx = deserialize_index(f.index);
  const Dataset queries = load_input(f.queries, "--queries");
  if (queries.dim() != idx.input_dim) {
    throw UsageError("query dimension " + std::to_string(queries.dim()) + " does not match index dimension " +
                     std::to_string(idx.input_dim));
  }
  if (f.k < 1) throw UsageError("--k must be >= 1");
  const std::size_t m_adc = f.m_ADC == 0 ? default_m_adc(idx.config.m) : f.m_ADC;
  if (m_adc > idx.config.m) {
    throw UsageError("--m_ADC=" + std::to_string(m_adc) + " exceeds m=" + std::to_string(idx.config.m));
  }
  const auto results = batch_search_baseline(idx, queries, f.k, m_adc, resolve_threads(f.threads));
  // Rows are padded to k with id -1 so every query keeps a record.
  std::vector<std::vector<std::int32_t>> ids(results.size());
  std::vector<std::vector<float>> scores(results.size());
  for (std::size_t q = 0; q < results.size(); ++q) {
    for (const auto& nb : results[q]) {
      ids[q].push_back(static_cast<std::int32_t>(nb.id));
      scores[q].push_back(static_cast<float>(nb.score));
    }
    ids[q].resize(f.k, -1);
    scores[q].resize(f.k, -FLT_MAX);
  }
  save_ivecs(ids, f.out + ".ivecs");
  save_fvecs_rows(scores, f.out + ".fvecs");
  const EntryBits bits = entry_bits(idx.config, idx.kind);
  write_meta(f.out + ".meta",
             {{"dataset", f.dataset.empty() ? fs::path(f.index).stem().string() : f.dataset},
              {"kind", std::string(kind_name(idx.kind))},
              {"bits", std::to_string(bits.payload)},
              {"m", std::to_string(idx.config.m)},
              {"m_ADC", std::to_string(m_adc)},
              {"n_B", std::to_string(idx.config.n_B)},
              {"n_W", std::to_string(idx.config.n_W)},
              {"l_UQ", std::to_string(idx.config.l_UQ)},
              {"l_SQ", std::to_string(idx.config.l_SQ)},
              {"seed", std::to_string(idx.seed)},
              {"k", std::to_string(f.k)}});
  out << "searched " << queries.size() << " queries, k=" << f.k << " m_ADC=" << m_adc << '\n';
  return kExitOk;
}

struct EvalCmd {
  std::string results, gt, out;
  std::size_t n = 1;
  std::string ks = "1,10,100";
};

int cmd_eval(const EvalCmd& f, std::ostream& out) {
  const std::string ids_path = f.results + ".ivecs";
  require_file(ids_path, "--results");
  require_file(f.gt, "--gt");
  const auto rows = load_ivecs(ids_path);
  const auto gt_ids = load_ivecs(f.gt);
  std::vector<SearchResult> results(rows.size());
  for (std::size_t q = 0; q < rows.size(); ++q) {
    for (auto id : rows[q]) {
      if (id >= 0) results[q].push_back({static_cast<std::uint32_t>(id), 0.0});
    }
  }
  GroundTruth gt(gt_ids.size());
  for (std::size_t q = 0; q < gt_ids.size(); ++q) {
    for (auto id : gt_ids[q]) gt[q].push_back({static_cast<std::uint32_t>(id), 0.0});
  }
  std::map<std::string, std::string> meta;
  if (fs::exists(f.results + ".meta")) meta = read_meta(f.results + ".meta");
  auto get = [&](const char* key) -> std::string {
    auto it = meta.find(key);
    return it == meta.end() ? std::string() : it->second;
  };
  const auto ks = parse_list<std::size_t>(f.ks, "--ks");
  Sink sink(f.out, out);
  auto& os = sink.get();
  os << kRecallCsvHeader << '\n';
  char buf[64];
  for (auto k : ks) {
    const double r = recall_n_at_k(results, gt, f.n, k);
    std::snprintf(buf, sizeof buf, "%.6f", r);
    os << get("dataset") << ',' << get("kind") << ',' << get("bits") << ',' << get("m") << ','
       << get("m_ADC") << ',' << get("n_B") << ',' << get("n_W") << ',' << get("l_UQ") << ','
       << get("l_SQ") << ',' << get("seed") << ',' << f.n << ',' << k << ',' << buf << '\n';
  }
  return kExitOk;
}

struct AblateCmd {
  BuildFlags b;
  std::string data, queries, gt, out, dataset = "dataset";
  std::string kinds = "OPQ,LOD_MSQ,MSQ,LOD_OPQ";
  std::string budgets = "100";
  std::string ks = "1,2,5,10,20,50,100";
  std::string seeds;
  std::size_t m_ADC = 0;
  std::size_t n = 1;
  int threads = 0;
};

int cmd_ablate(const AblateCmd& f, std::ostream& out, std::ostream& err) {
  const Dataset data = load_input(f.data, "--data");
  const Dataset queries = load_input(f.queries, "--queries");
  if (f.seeds.empty()) throw UsageError("--seeds is required");
  GridSpec spec;
  spec.dataset = f.dataset;
  spec.kinds = parse_kinds(f.kinds);
  spec.budgets = parse_list<int>(f.budgets, "--bits");
  spec.ks = parse_list<std::size_t>(f.ks, "--ks");
  spec.seeds = parse_list<std::uint64_t>(f.seeds, "--seeds");
  spec.m = f.b.m;
  spec.m_ADC = f.m_ADC;
  spec.n_W = f.b.n_W;
  spec.l_UQ = f.b.l_UQ;
  spec.l_SQ = f.b.l_SQ;
  spec.n = f.n;
  std::optional<Dataset> pca;
  const int threads = resolve_threads(f.threads);
  spec.build = options_from_flags(f.b, threads, pca);

  GroundTruth gt;
  if (!f.gt.empty()) {
    require_file(f.gt, "--gt");
    const auto ids = load_ivecs(f.gt);
    gt.resize(ids.size());
    for (std::size_t q = 0; q < ids.size(); ++q) {
      for (auto id : ids[q]) gt[q].push_back({static_cast<std::uint32_t>(id), 0.0});
    }
  } else {
    gt = cached_ground_truth(f.data, data, queries, f.n, threads);
  }
  const RecallReport rep = run_grid(data, queries, gt, spec);
  for (const auto& w : rep.warnings) err << "warning: " << w << '\n';
  Sink sink(f.out, out);
  write_recall_csv(rep.rows, sink.get());
  return kExitOk;
}

struct AnalyzeCmd {
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  // variance
  std::size_t dim = 64, n_residuals = 100000, n_queries = 100000, n_v = 1000;
  double concentration = 0.0;
  std::string data, queries;
  std::size_t m = 20, partition = 0;
  // bounds
  std::string ms = "100,1000,10000", ds = "8,32,128", deltas = "0.1,0.5";
  std::size_t trials = 2000;
  double eta1 = 0.0;
  // lemma1
  std::string lemma_ds = "1,4,200";
  std::size_t samples = 1000000;
  // theorem3
  double gamma = 1.0, l2 = 0.0, eta2 = 0.0, delta = 0.5;
  std::size_t d3 = 0, m3 = 0;
};

int analyze_variance(const AnalyzeCmd& f, std::ostream& out) {
  Dataset residuals, queries;
  std::vector<float> center;
  if (!f.data.empty()) {
    const Dataset data = load_input(f.data, "--data");
    const Dataset qs = load_input(f.queries, "--queries");
    if (f.partition >= f.m) throw UsageError("--partition must be < --m");
    const VQCodebook cb = train_vq(data, f.m, 20, stream_seed(f.seed, 1), resolve_threads(f.threads));
    const auto assign = assign_all(cb, data, resolve_threads(f.threads));
    const auto c = cb.center(f.partition);
    center.assign(c.begin(), c.end());
    std::vector<float> vals;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (assign[i] != f.partition) continue;
      for (std::size_t k = 0; k < data.dim(); ++k) vals.push_back(data.row(i)[k] - c[k]);
    }
    if (vals.empty()) throw Error("partition " + std::to_string(f.partition) + " is empty");
    residuals = Dataset(data.dim(), std::move(vals));
    queries = qs;
  } else {
    // Isotropic residuals; queries get `concentration` times a unit vector along the center.
    residuals = make_gaussian(f.n_residuals, f.dim, stream_seed(f.seed, 30));
    queries = make_gaussian(f.n_queries, f.dim, stream_seed(f.seed, 31));
    center.assign(f.dim, 0.0f);
    center[0] = 1.0f;
    for (std::size_t i = 0; i < queries.size(); ++i) queries.row(i)[0] += static_cast<float>(f.concentration);
  }
  const auto prof = variance_profile(residuals, queries, center, f.n_v, stream_seed(f.seed, 32));
  Sink sink(f.out, out);
  write_profile_csv(prof, sink.get());
  return kExitOk;
}

int analyze_bounds(const AnalyzeCmd& f, std::ostream& out, std::ostream& err) {
  const auto ms = parse_list<std::size_t>(f.ms, "--ms");
  const auto ds = parse_list<std::size_t>(f.ds, "--ds");
  const auto deltas = parse_list<double>(f.deltas, "--deltas");
  std::vector<SweepPoint> sweep;
  for (auto m : ms)
    for (auto d : ds)
      for (auto delta : deltas) sweep.push_back({m, d, delta});
  const double eta1 = f.eta1 > 0.0 ? f.eta1 : calibrate_eta1(sweep);
  err << "eta1=" << fmt_double(eta1) << (f.eta1 > 0.0 ? " (given)" : " (calibrated)") << '\n';
  Sink sink(f.out, out);
  auto& os = sink.get();
  os << "m,d,delta,L1,L1_weak,exact,empirical,sphere_exact\n";
  std::uint64_t stream = 0;
  for (const auto& p : sweep) {
    const double l1 = l1_bound(static_cast<double>(p.m), p.d, p.delta, eta1).value;
    const double weak = l1_weak_bound(static_cast<double>(p.m), p.d, p.delta, eta1).value;
    const double exact = max_cos_quantile_exact(p.m, p.d, p.delta);
    const double emp = f.trials > 0
                           ? empirical_max_cos(p.m, p.d, p.delta, f.trials, stream_seed(f.seed, stream++),
                                               resolve_threads(f.threads))
                           : 0.0;
    const double sphere = p.d >= 3 ? sphere_max_cos_quantile(p.m, p.d, p.delta) : 0.0;
    os << p.m << ',' << p.d << ',' << fmt_double(p.delta) << ',' << fmt_double(l1) << ','
       << fmt_double(weak) << ',' << fmt_double(exact) << ',' << fmt_double(emp) << ','
       << fmt_double(sphere) << '\n';
  }
  return kExitOk;
}

int analyze_lemma1(const AnalyzeCmd& f, std::ostream& out) {
  const auto ds = parse_list<std::size_t>(f.lemma_ds, "--ds");
  Sink sink(f.out, out);
  auto& os = sink.get();
  os << "d,estimate,stderr\n";
  std::uint64_t stream = 0;
  for (auto d : ds) {
    const auto e = lemma1_mc(d, f.samples, stream_seed(f.seed, stream++), resolve_threads(f.threads));
    os << d << ',' << fmt_double(e.estimate) << ',' << fmt_double(e.stderr_) << '\n';
  }
  return kExitOk;
}

int analyze_theorem3(const AnalyzeCmd& f, std::ostream& out) {
  if (f.d3 == 0) throw UsageError("--d is required");
  Sink sink(f.out, out);
  auto& os = sink.get();
  os << "gamma,d,L2,condition";
  const bool weak = f.eta2 > 0.0;
  if (weak) os << ",weak_condition";
  os << '\n';
  os << fmt_double(f.gamma) << ',' << f.d3 << ',' << fmt_double(f.l2) << ','
     << (theorem3_check(f.gamma, f.d3, f.l2) ? "true" : "false");
  if (weak) {
    if (f.m3 == 0 || f.eta1 <= 0.0) throw UsageError("the weak form needs --m and --eta1");
    os << ','
       << (theorem3_weak_check(f.gamma, static_cast<double>(f.m3), f.d3, f.delta, f.eta1, f.eta2) ? "true"
                                                                                                 : "false");
  }
  os << '\n';
  return kExitOk;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Splices `--config FILE` entries in front of the explicit flags of the
// subcommand so flags given on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::string cfg_path;
  std::size_t sub_pos = std::string::npos;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      cfg_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      cfg_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (cfg_path.empty()) return args;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (!rest[i].empty() && rest[i][0] != '-') {
      sub_pos = i;
      // "analyze <mode>" has a nested subcommand
      if (rest[i] == "analyze" && i + 1 < rest.size() && rest[i + 1][0] != '-') ++sub_pos;
      break;
    }
  }
  if (sub_pos == std::string::npos) throw UsageError("--config needs a subcommand");
  std::vector<std::string> given;
  for (const auto& a : rest) {
    if (a.rfind("--", 0) == 0) given.push_back(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::vector<std::string> from_cfg;
  for (const auto& [k, v] : parse_flat_config(read_text(cfg_path))) {
    if (std::find(given.begin(), given.end(), k) != given.end()) continue;
    from_cfg.push_back("--" + k);
    from_cfg.push_back(v);
  }
  out.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1));
  out.insert(out.end(), from_cfg.begin(), from_cfg.end());
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), rest.end());
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_flat_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"IVF + local orthogonal decomposition + multiscale quantization for inner product search",
               "lodmsq"};
  app.footer(kParamFooter);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  GenFlags gen;
  auto* sc_gen = app.add_subcommand("gen", "generate synthetic datasets and queries");
  sc_gen->add_option("--type", gen.type, "clustered, gaussian or lossless")->capture_default_str();
  sc_gen->add_option("--n", gen.n, "database rows")->capture_default_str();
  sc_gen->add_option("--dim", gen.dim, "dimension")->capture_default_str();
  sc_gen->add_option("--clusters", gen.clusters, "Gaussian clusters (clustered)")->capture_default_str();
  sc_gen->add_option("--center-std", gen.center_std, "cluster center spread")->capture_default_str();
  sc_gen->add_option("--point-std", gen.point_std, "within-cluster spread")->capture_default_str();
  sc_gen->add_option("--mean-offset", gen.mean_offset, "global mean of cluster centers")->capture_default_str();
  sc_gen->add_option("--queries", gen.queries, "query count")->capture_default_str();
  sc_gen->add_option("--noise", gen.noise, "query noise std (clustered)")->capture_default_str();
  sc_gen->add_option("--seed", gen.seed, "random seed")->required();
  sc_gen->add_option("--out-data", gen.out_data, "database fvecs")->required();
  sc_gen->add_option("--out-queries", gen.out_queries, "query fvecs");
  sc_gen->add_option("--out-model", gen.out_model, "frozen model index (lossless)");
  sc_gen->add_option("--lossless-kind", gen.lossless_kind, "kind the lossless data targets")->capture_default_str();
  sc_gen->add_option("--m", gen.m, "partitions (lossless)")->capture_default_str();

  GtFlags gt;
  auto* sc_gt = app.add_subcommand("gt", "exact top-k ground truth (cached beside the dataset)");
  sc_gt->add_option("--data", gt.data, "database fvecs")->required();
  sc_gt->add_option("--queries", gt.queries, "query fvecs")->required();
  sc_gt->add_option("--depth", gt.depth, "neighbors per query")->capture_default_str();
  sc_gt->add_option("--out", gt.out, "also write PREFIX.ivecs / PREFIX.fvecs");
  sc_gt->add_option("--threads", gt.threads, "worker threads (0 = all cores)");

  BuildCmd build;
  auto* sc_build = app.add_subcommand("build", "train and write an index");
  sc_build->add_option("--data", build.data, "database fvecs")->required();
  sc_build->add_option("--out", build.out, "index file")->required();
  sc_build->add_option("--seed", build.seed, "random seed")->required();
  sc_build->add_option("--model", build.model, "frozen model index; skips training");
  sc_build->add_option("--threads", build.threads, "worker threads (0 = all cores)");
  add_index_params(sc_build, build.b, true);

  SearchCmd search;
  auto* sc_search = app.add_subcommand("search", "batch top-k search");
  sc_search->add_option("--index", search.index, "index file")->required();
  sc_search->add_option("--queries", search.queries, "query fvecs")->required();
  sc_search->add_option("--k", search.k, "results per query")->capture_default_str();
  sc_search->add_option("--m_ADC", search.m_ADC, "partitions scanned per query (default max(1, m/10))");
  sc_search->add_option("--out", search.out, "writes PREFIX.ivecs, PREFIX.fvecs, PREFIX.meta")->required();
  sc_search->add_option("--dataset", search.dataset, "dataset label for CSV output");
  sc_search->add_option("--threads", search.threads, "worker threads (0 = all cores)");

  EvalCmd ev;
  auto* sc_eval = app.add_subcommand("eval", "recall-n@k of search results as CSV");
  sc_eval->add_option("--results", ev.results, "search output prefix")->required();
  sc_eval->add_option("--gt", ev.gt, "ground-truth ivecs")->required();
  sc_eval->add_option("--n", ev.n, "true neighbors counted (recall-n@k)")->capture_default_str();
  sc_eval->add_option("--ks", ev.ks, "comma-separated k values")->capture_default_str();
  sc_eval->add_option("--out", ev.out, "CSV path ('-' = stdout)");

  AblateCmd ab;
  auto* sc_ab = app.add_subcommand("ablate", "recall grid over kinds, budgets and seeds");
  add_index_params(sc_ab, ab.b, false);
  sc_ab->remove_option(sc_ab->get_option("--n_B"));
  sc_ab->remove_option(sc_ab->get_option("--bits"));
  sc_ab->add_option("--data", ab.data, "database fvecs")->required();
  sc_ab->add_option("--queries", ab.queries, "query fvecs")->required();
  sc_ab->add_option("--gt", ab.gt, "ground-truth ivecs (default: cached brute force)");
  sc_ab->add_option("--kinds", ab.kinds, "comma-separated kinds")->capture_default_str();
  sc_ab->add_option("--bits", ab.budgets, "comma-separated bit budgets")->capture_default_str();
  sc_ab->add_option("--ks", ab.ks, "comma-separated k values")->capture_default_str();
  sc_ab->add_option("--seeds", ab.seeds, "comma-separated seeds")->required();
  sc_ab->add_option("--m_ADC", ab.m_ADC, "partitions scanned per query (default max(1, m/10))");
  sc_ab->add_option("--n", ab.n, "true neighbors counted (recall-n@k)")->capture_default_str();
  sc_ab->add_option("--dataset", ab.dataset, "dataset label")->capture_default_str();
  sc_ab->add_option("--out", ab.out, "CSV path ('-' = stdout)");
  sc_ab->add_option("--threads", ab.threads, "worker threads (0 = all cores)");

  AnalyzeCmd an;
  auto* sc_an = app.add_subcommand("analyze", "numerical analysis tables");
  sc_an->require_subcommand(1);
  auto common = [&](CLI::App* s) {
    s->add_option("--out", an.out, "CSV path ('-' = stdout)");
    s->add_option("--seed", an.seed, "random seed")->capture_default_str();
    s->add_option("--threads", an.threads, "worker threads (0 = all cores)");
  };
  auto* an_var = sc_an->add_subcommand("variance", "projected IP variance over directions in span{u1, u2}");
  common(an_var);
  an_var->add_option("--dim", an.dim, "dimension (synthetic)")->capture_default_str();
  an_var->add_option("--n-residuals", an.n_residuals, "residual samples (synthetic)")->capture_default_str();
  an_var->add_option("--n-queries", an.n_queries, "query samples (synthetic)")->capture_default_str();
  an_var->add_option("--concentration", an.concentration, "query shift along the center (synthetic)")->capture_default_str();
  an_var->add_option("--n_v", an.n_v, "directions")->capture_default_str();
  an_var->add_option("--data", an.data, "database fvecs (real data mode)");
  an_var->add_option("--queries", an.queries, "query fvecs (real data mode)");
  an_var->add_option("--m", an.m, "partitions (real data mode)")->capture_default_str();
  an_var->add_option("--partition", an.partition, "partition to profile")->capture_default_str();
  auto* an_b = sc_an->add_subcommand("bounds", "L1 bounds, exact and empirical max-cosine quantiles");
  common(an_b);
  an_b->add_option("--ms", an.ms, "center counts")->capture_default_str();
  an_b->add_option("--ds", an.ds, "dimensions")->capture_default_str();
  an_b->add_option("--deltas", an.deltas, "failure probabilities")->capture_default_str();
  an_b->add_option("--trials", an.trials, "Monte Carlo trials per point (0 skips)")->capture_default_str();
  an_b->add_option("--eta1", an.eta1, "eta1 (default: calibrated on the sweep)");
  auto* an_l = sc_an->add_subcommand("lemma1", "Monte Carlo E(x.y)^2 on the unit sphere");
  common(an_l);
  an_l->add_option("--ds", an.lemma_ds, "dimensions")->capture_default_str();
  an_l->add_option("--samples", an.samples, "pairs per dimension")->capture_default_str();
  auto* an_t = sc_an->add_subcommand("theorem3", "optimal-direction condition");
  common(an_t);
  an_t->add_option("--gamma", an.gamma, "eigenvalue ratio (>= 1)")->capture_default_str();
  an_t->add_option("--d", an.d3, "dimension (>= 3)")->required();
  an_t->add_option("--l2", an.l2, "L2 bound value")->capture_default_str();
  an_t->add_option("--eta2", an.eta2, "eta2 for the weak form (no default)");
  an_t->add_option("--eta1", an.eta1, "eta1 for the weak form");
  an_t->add_option("--m", an.m3, "center count for the weak form");
  an_t->add_option("--delta", an.delta, "failure probability for the weak form")->capture_default_str();

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\nRun with --help for usage.\n";
      return kExitUsage;
    }

    if (*sc_gen) return cmd_gen(gen, out);
    if (*sc_gt) return cmd_gt(gt, out, err);
    if (*sc_build) return cmd_build(build, out, err);
    if (*sc_search) return cmd_search(search, out);
    if (*sc_eval) return cmd_eval(ev, out);
    if (*sc_ab) return cmd_ablate(ab, out, err);
    if (*sc_an) {
      if (*an_var) return analyze_variance(an, out);
      if (*an_b) return analyze_bounds(an, out, err);
      if (*an_l) return analyze_lemma1(an, out);
      if (*an_t) return analyze_theorem3(an, out);
    }
    err << "error: no subcommand\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace lodmsq::cli
