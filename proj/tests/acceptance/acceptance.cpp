// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit code 1 if
// any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "lodmsq/baselines.hpp"
#include "lodmsq/error.hpp"
#include "lodmsq/eval.hpp"
#include "lodmsq/index.hpp"
#include "lodmsq/lod.hpp"
#include "lodmsq/search.hpp"
#include "lodmsq/synthetic.hpp"
#include "lodmsq/theory.hpp"
#include "oracles.hpp"

using namespace lodmsq;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failure messages and the overall verdict.
struct Check {
  Outcome o;
  int shown = 0;
  void fail(const std::string& why) {
    if (o.pass) o.detail.clear();
    o.pass = false;
    if (shown++ < 3) o.detail += (o.detail.empty() ? "" : "; ") + why;
  }
  void note(const std::string& s) {
    if (o.pass) o.detail += (o.detail.empty() ? "" : "; ") + s;
  }
};

std::string f6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

bool rel_close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1.0}); }

// 1
Outcome lossless_topk() {
  Check c;
  const std::size_t k = 10;
  const auto inst = make_lossless(IndexKind::kMipsLodMsq, 10000, 32, 10, 101);
  const Index idx = build_index(inst.data, inst.config, inst.options, 101);
  const Dataset qs = make_gaussian(1000, 32, 102);
  std::size_t exact = 0;
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto got = search(qs.row(qi), k, idx, idx.config.m);
    const auto want = oracle::topk(inst.data, qs.row(qi), k);
    bool ok = got.size() == k;
    for (std::size_t r = 0; ok && r < k; ++r) {
      // The true score of the returned id must equal the r-th true score, and so
      // must the reported score.
      const double truth = oracle::dot(inst.data.row(got[r].id), qs.row(qi));
      ok = rel_close(truth, want[r].score, 1e-5) && rel_close(got[r].score, want[r].score, 1e-5);
    }
    if (ok) {
      ++exact;
    } else {
      c.fail("query " + std::to_string(qi) + " differs from brute force");
    }
  }
  c.note(std::to_string(exact) + "/1000 queries exact");
  return c.o;
}

// 2
Outcome adc_equivalence() {
  Check c;
  const Dataset x = make_clustered({.n = 20000, .dim = 64, .clusters = 50, .seed = 201});
  const Index idx = build_index(x, {.m = 20, .n_B = 16, .n_W = 16, .l_UQ = 8, .l_SQ = 4}, {.opq_iters = 5}, 202);
  const Dataset qs = make_gaussian(10000, 64, 203);
  std::mt19937_64 rng(204);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  // Entry locations by id.
  std::vector<std::pair<std::size_t, std::size_t>> where(x.size());
  for (std::size_t pi = 0; pi < idx.partitions.size(); ++pi) {
    for (std::size_t e = 0; e < idx.partitions[pi].size(); ++e) where[idx.partitions[pi].ids[e]] = {pi, e};
  }
  double worst = 0;
  for (std::size_t t = 0; t < 10000; ++t) {
    const auto q = qs.row(t);
    const auto [pi, e] = where[pick(rng)];
    const auto& p = idx.partitions[pi];
    std::vector<double> qr(64);
    idx.rotation.apply_transpose(q, std::span<double>(qr));
    const auto tables = build_adc_tables(qr, idx.pq);
    const double got = score_entry(q, idx, p, e, tables);
    const double want = oracle::explicit_residual_ip(idx, p, e, q);
    const double err = std::abs(got - want) / std::max(std::abs(want), 1.0);
    worst = std::max(worst, err);
    if (err > 1e-5) c.fail("pair " + std::to_string(t) + ": " + f6(got) + " vs " + f6(want));
  }
  c.note("max rel err " + f6(worst));
  return c.o;
}

// 3
Outcome norm_preservation() {
  Check c;
  const std::size_t d = 64;
  const Dataset x = make_gaussian(50000, d, 301);
  BuildReport rep;
  const Index idx = build_index(x, {.m = 50, .n_B = 16, .n_W = 16, .l_UQ = 8, .l_SQ = 4}, {.opq_iters = 5}, 302, &rep);
  double worst_slack = -1e300;
  std::size_t checked = 0;
  for (std::size_t pi = 0; pi < idx.partitions.size(); ++pi) {
    const auto& p = idx.partitions[pi];
    const std::vector<double> v(p.direction.begin(), p.direction.end());
    for (std::size_t e = 0; e < p.size(); ++e) {
      std::vector<double> r(d);
      for (std::size_t k = 0; k < d; ++k) r[k] = double(x.row(p.ids[e])[k]) - p.center[k];
      const auto o = proj_orth(v, r);
      const double level = p.sq.levels[p.sq_codes[e]];
      auto rec = oracle::explicit_msq(idx, p, e);
      const double lhs = std::abs(oracle::norm(proj_orth(v, rec)) - oracle::norm(o));
      if (level != 0.0) {
        for (auto& a : rec) a /= level;
      } else {
        // Rebuild the unscaled reconstruction with a unit level.
        Index one = idx;
        one.partitions[pi].sq.levels[p.sq_codes[e]] = 1.0;
        rec = oracle::explicit_msq(one, one.partitions[pi], e);
      }
      const double rhs = std::abs(level - rep.exact_lambda[pi][e]) * oracle::norm(proj_orth(v, rec)) + 1e-6;
      worst_slack = std::max(worst_slack, lhs - rhs);
      if (lhs > rhs) c.fail("entry " + std::to_string(p.ids[e]) + ": " + f6(lhs) + " > " + f6(rhs));
      ++checked;
    }
  }
  if (checked != x.size()) c.fail("only " + std::to_string(checked) + " entries indexed");
  c.note(std::to_string(checked) + " entries, max(lhs - rhs) " + f6(worst_slack));
  return c.o;
}

// 4
Outcome bitrate_parity() {
  Check c;
  struct Row {
    IndexKind kind;
    int budget, n_B, expect;
  };
  const Row rows[] = {{IndexKind::kMipsLodMsq, 100, 23, 100}, {IndexKind::kMipsLodMsq, 200, 48, 200},
                      {IndexKind::kMipsLodOpq, 100, 24, 100}, {IndexKind::kMipsLodOpq, 200, 49, 200},
                      {IndexKind::kMipsOpq, 100, 25, 100},    {IndexKind::kMipsOpq, 200, 50, 200}};
  for (const auto& r : rows) {
    const int l_UQ = r.kind == IndexKind::kMipsLodMsq ? 8 : 4;
    const auto cfg = config_for_budget(r.kind, r.budget, 20, 16, l_UQ, 4);
    const int bits = bitrate_per_entry(cfg, r.kind);
    if (static_cast<int>(cfg.n_B) != r.n_B || bits != r.expect) {
      c.fail(std::string(kind_name(r.kind)) + " n_B=" + std::to_string(cfg.n_B) + " bits=" + std::to_string(bits));
    }
  }
  try {
    validate_parity({{IndexKind::kMipsLodMsq, {.n_B = 23, .n_W = 16, .l_UQ = 8}},
                     {IndexKind::kMipsLodOpq, {.n_B = 24, .n_W = 16, .l_UQ = 4}},
                     {IndexKind::kMipsOpq, {.n_B = 25, .n_W = 16}}});
  } catch (const std::exception& e) {
    c.fail(std::string("equal budgets rejected: ") + e.what());
  }
  try {
    validate_parity({{IndexKind::kMipsLodMsq, {.n_B = 23, .n_W = 16, .l_UQ = 8}},
                     {IndexKind::kMipsOpq, {.n_B = 50, .n_W = 16}}});
    c.fail("100 vs 200 bits accepted");
  } catch (const InvalidArgument&) {
  }
  c.note("6 budgets certified, mixed budgets rejected");
  return c.o;
}

// 5
Outcome recall_ordering() {
  Check c;
  const Dataset x = make_clustered({.n = 100000, .dim = 200, .clusters = 1000, .seed = 501});
  const Dataset qs = make_noisy_queries(x, 1000, 0.1, 502);
  const auto gt = brute_force_ground_truth(x, qs, 1);
  GridSpec spec;
  spec.dataset = "clustered";
  spec.kinds = {IndexKind::kMipsOpq, IndexKind::kMipsMsq, IndexKind::kMipsLodOpq, IndexKind::kMipsLodMsq};
  spec.budgets = {100};
  spec.ks = {10};
  spec.seeds = {1, 2, 3};
  spec.m = 100;
  spec.m_ADC = 10;
  const auto rep = run_grid(x, qs, gt, spec);
  const auto avg = average_over_seeds(rep.rows);
  auto recall = [&](IndexKind k) {
    for (const auto& r : avg)
      if (r.kind == k) return r.recall;
    throw Error("missing kind");
  };
  const double lod_msq = recall(IndexKind::kMipsLodMsq), opq = recall(IndexKind::kMipsOpq),
               msq = recall(IndexKind::kMipsMsq), lod_opq = recall(IndexKind::kMipsLodOpq);
  const std::string summary = "recall1@10 LOD_MSQ " + f6(lod_msq) + ", OPQ " + f6(opq) + ", MSQ " + f6(msq) +
                              ", LOD_OPQ " + f6(lod_opq);
  if (lod_msq - opq < -0.005) c.fail("LOD_MSQ below OPQ");
  if (lod_msq - std::max(msq, lod_opq) < -0.005) c.fail("LOD_MSQ below max(MSQ, LOD_OPQ)");
  if (c.o.pass) {
    c.note(summary);
  } else {
    c.o.detail += "; " + summary;
  }
  return c.o;
}

// 6
Outcome sphere_second_moment() {
  Check c;
  for (auto [d, target] : {std::pair<std::size_t, double>{4, 0.25}, {200, 0.005}}) {
    const auto e = lemma1_mc(d, 1000000, 600 + d);
    const double z = std::abs(e.estimate - target) / e.stderr_;
    c.note("d=" + std::to_string(d) + " " + f6(e.estimate) + " (" + f6(z) + " SE)");
    if (z > 3) c.fail("d=" + std::to_string(d) + " estimate " + f6(e.estimate) + " is " + f6(z) + " SE off");
  }
  return c.o;
}

// 7
Outcome max_cos_machinery() {
  Check c;
  double worst = 0;
  for (std::size_t m : {1, 2, 10, 100, 1000, 100000})
    for (double delta : {0.01, 0.1, 0.5, 0.9}) {
      const double err = std::abs(max_cos_quantile_exact(m, 2, delta) - oracle::invert_d2(m, delta));
      worst = std::max(worst, err);
      if (err > 1e-8) c.fail("d=2 m=" + std::to_string(m) + " err " + f6(err));
    }
  // The exact F describes the first coordinate on the sphere in R^(d+2).
  const double exact = max_cos_quantile_exact(1000, 32, 0.5);
  const double mc = oracle::mc_max_cos_quantile(1000, 34, 0.5, 20000, 701);
  if (std::abs(exact - mc) > 0.01) c.fail("MC " + f6(mc) + " vs exact " + f6(exact));

  std::vector<SweepPoint> sweep;
  for (std::size_t m : {100, 1000, 10000})
    for (std::size_t d : {8, 32, 128})
      for (double delta : {0.1, 0.5}) sweep.push_back({m, d, delta});
  const double eta1 = calibrate_eta1(sweep);
  for (const auto& p : sweep) {
    const double l1 = l1_bound(double(p.m), p.d, p.delta, eta1).value;
    const double h = max_cos_quantile_exact(p.m, p.d, p.delta);
    if (l1 > h) c.fail("L1 " + f6(l1) + " > exact " + f6(h) + " at m=" + std::to_string(p.m));
  }
  c.note("d=2 max err " + f6(worst) + ", MC " + f6(mc) + " vs " + f6(exact) + ", eta1 " + f6(eta1));
  return c.o;
}

// 8
Outcome l2_profiles() {
  Check c;
  std::mt19937_64 rng(801);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(1, 2000);
  std::uniform_int_distribution<std::size_t> dim(2, 256);
  std::uniform_real_distribution<double> eta(0.05, 3.0), del(0.05, 0.95);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> h(len(rng));
    for (auto& v : h) v = ln(rng);
    std::sort(h.rbegin(), h.rend());
    const std::size_t d = dim(rng);
    const double e = eta(rng), delta = del(rng);
    const double want = oracle::l2_naive(h, delta, d, e);
    const auto got = l2_bound(h, delta, d, e);
    if (std::abs(got.value - want) > 1e-12 * std::max(1.0, want)) {
      c.fail("profile " + std::to_string(t) + ": " + f6(got.value) + " vs " + f6(want));
    }
    const std::size_t half = (h.size() + 1) / 2;
    const double witness = h[half - 1] / h[0] * oracle::l1(double(half), d, delta, e);
    if (got.value < witness) c.fail("profile " + std::to_string(t) + " below witness");
  }
  c.note("100 profiles");
  return c.o;
}

// 9
Outcome variance_anisotropy() {
  Check c;
  const std::size_t d = 32, n = 100000;
  const Dataset residuals = make_gaussian(n, d, 901);
  std::vector<float> center(d, 0.0f);
  center[0] = 1.0f;
  Dataset concentrated = make_gaussian(n, d, 902);
  for (std::size_t i = 0; i < n; ++i) concentrated.row(i)[0] += 2.0f;
  const auto a = variance_profile(residuals, concentrated, center, 360, 903);
  const auto iso = variance_profile(residuals, make_gaussian(n, d, 904), center, 360, 905);
  if (!(a.max_min_ratio() > 2.0)) c.fail("concentrated ratio " + f6(a.max_min_ratio()));
  if (!(iso.max_min_ratio() < 1.2)) c.fail("isotropic ratio " + f6(iso.max_min_ratio()));
  c.note("ratios " + f6(a.max_min_ratio()) + " and " + f6(iso.max_min_ratio()));
  return c.o;
}

// 10
Outcome cli_determinism() {
  Check c;
  oracle::TempDir dir("acc");
  auto run = [&](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) c.fail(args[0] + " exited " + std::to_string(code) + ": " + err.str());
    return out.str();
  };
  const auto data = (dir / "d.fvecs").string(), qs = (dir / "q.fvecs").string();
  run({"gen", "--n", "20000", "--dim", "64", "--clusters", "100", "--queries", "200", "--seed", "1001",
       "--out-data", data, "--out-queries", qs});
  run({"gt", "--data", data, "--queries", qs, "--depth", "10", "--out", (dir / "gt").string()});
  std::vector<std::vector<std::uint8_t>> ref;
  int variant = 0;
  for (const char* threads : {"1", "4", "1", "4"}) {
    const std::string tag = std::to_string(variant++);
    const auto idx = (dir / ("i" + tag + ".bin")).string(), res = (dir / ("r" + tag)).string(),
               csv = (dir / ("e" + tag + ".csv")).string();
    run({"build", "--data", data, "--out", idx, "--seed", "7", "--m", "20", "--bits", "100", "--threads", threads});
    run({"search", "--index", idx, "--queries", qs, "--k", "10", "--out", res, "--dataset", "det", "--threads",
         threads});
    run({"eval", "--results", res, "--gt", (dir / "gt.ivecs").string(), "--ks", "1,10", "--out", csv});
    if (!c.o.pass) return c.o;
    std::vector<std::vector<std::uint8_t>> files = {oracle::read_bytes(idx), oracle::read_bytes(res + ".ivecs"),
                                                    oracle::read_bytes(res + ".fvecs"),
                                                    oracle::read_bytes(res + ".meta"), oracle::read_bytes(csv)};
    if (ref.empty()) {
      ref = files;
    } else {
      const char* names[] = {"index", "ids", "scores", "meta", "csv"};
      for (std::size_t f = 0; f < files.size(); ++f) {
        if (files[f] != ref[f]) c.fail(std::string(names[f]) + " differs in run " + tag + " (threads " + threads + ")");
      }
    }
  }
  c.note("4 runs byte-identical");
  return c.o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "lossless round-trip exactness", 60, lossless_topk},
      {2, "ADC equivalence", 10, adc_equivalence},
      {3, "norm preservation", 120, norm_preservation},
      {4, "bitrate parity", 1, bitrate_parity},
      {5, "recall ordering", 900, recall_ordering},
      {6, "sphere inner-product second moment", 30, sphere_second_moment},
      {7, "max-cosine quantile machinery", 300, max_cos_machinery},
      {8, "L2 bound on random profiles", 5, l2_profiles},
      {9, "variance anisotropy", 60, variance_anisotropy},
      {10, "CLI determinism", 300, cli_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& cr : all) {
    if (!only.empty() && !only.count(cr.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > cr.budget_s) {
      o.pass = false;
      o.detail += "; over time budget of " + f6(cr.budget_s) + " s";
    }
    if (!o.pass) ++failed;
    std::printf("%s [%2d] %-38s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", cr.id, cr.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
