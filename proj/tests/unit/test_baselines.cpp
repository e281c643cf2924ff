#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "lodmsq/baselines.hpp"
#include "lodmsq/error.hpp"
#include "lodmsq/eval.hpp"
#include "lodmsq/lod.hpp"
#include "lodmsq/synthetic.hpp"
#include "oracles.hpp"

using namespace lodmsq;

namespace {

constexpr IndexKind kAll[] = {IndexKind::kMipsPq,     IndexKind::kMipsOpq,   IndexKind::kL2Opq,
                              IndexKind::kMipsMsq,    IndexKind::kMipsLodOpq, IndexKind::kMipsLodMsq};

double l2sq(std::span<const float> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("kind names round trip") {
  for (auto k : kAll) CHECK(parse_kind(kind_name(k)) == k);
  CHECK(parse_kind("lod-msq") == IndexKind::kMipsLodMsq);
  CHECK(parse_kind("OPQ") == IndexKind::kMipsOpq);
  CHECK_THROWS_AS(parse_kind("ALSH"), InvalidArgument);
}

TEST_CASE("PQ-only budgets") {
  CHECK(bitrate_per_entry({.n_B = 25, .n_W = 16}, IndexKind::kMipsPq) == 100);
  CHECK(bitrate_per_entry({.n_B = 50, .n_W = 16}, IndexKind::kMipsOpq) == 200);
}

TEST_CASE("MIPS-to-l2 transform") {
  const Dataset x(2, {3, 4, 0, 0, 0.3f, 0.4f});
  double U = 0;
  const Dataset t = mips_to_l2_transform(x, &U);
  CHECK(U == Catch::Approx(5.0));
  REQUIRE(t.dim() == 3);
  CHECK(t.row(0)[0] == Catch::Approx(0.6f));
  CHECK(t.row(0)[1] == Catch::Approx(0.8f));
  CHECK(t.row(0)[2] == Catch::Approx(0.0f).margin(1e-6));
  CHECK(t.row(1)[0] == 0.0f);
  CHECK(t.row(1)[1] == 0.0f);
  CHECK(t.row(1)[2] == 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(oracle::dot(t.row(i), t.row(i)) == Catch::Approx(1.0).margin(1e-6));
  }
  const std::vector<float> q = {0, 2};
  CHECK(transform_query(q) == std::vector<float>{0, 1, 0});
  const std::vector<float> zero = {0, 0};
  CHECK_THROWS_AS(transform_query(zero), InvalidArgument);
}

TEST_CASE("l2 nearest neighbour after the transform is the MIPS argmax") {
  const Dataset x = make_gaussian(100, 10, 4);
  const Dataset t = mips_to_l2_transform(x);
  const Dataset qs = make_gaussian(50, 10, 5);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto qh = transform_query(qs.row(qi));
    const auto want = oracle::topk(x, qs.row(qi), 1)[0].id;
    CHECK(oracle::nearest(t.values(), t.dim(), qh) == want);
  }
}

TEST_CASE("unit-normalized data skips the transform") {
  const Dataset x = l2_normalize(make_gaussian(600, 8, 6));
  CHECK(is_unit_normalized(x));
  CHECK_FALSE(is_unit_normalized(make_gaussian(10, 8, 6)));
  const Index idx = build_baseline(IndexKind::kL2Opq, x, {.m = 4, .n_B = 4, .n_W = 16}, {.opq_iters = 1}, 3);
  CHECK_FALSE(idx.l2_transformed);
  CHECK(idx.dim == 8);
  const Index raw = build_baseline(IndexKind::kL2Opq, make_gaussian(600, 8, 6), {.m = 4, .n_B = 4, .n_W = 16},
                                   {.opq_iters = 1}, 3);
  CHECK(raw.l2_transformed);
  CHECK(raw.dim == 9);
  CHECK(raw.input_dim == 8);
}

TEST_CASE("OPQ with identity rotation reproduces PQ") {
  const Dataset x = make_clustered({.n = 2000, .dim = 16, .clusters = 20, .seed = 7});
  const IndexConfig cfg{.m = 5, .n_B = 4, .n_W = 16};
  const Index pq = build_baseline(IndexKind::kMipsPq, x, cfg, {}, 11);
  const Index opq = build_baseline(IndexKind::kMipsOpq, x, cfg, {.opq_iters = 0}, 11);
  CHECK(opq.rotation == Rotation::identity(16));
  CHECK(opq.pq == pq.pq);
  const Dataset qs = make_gaussian(20, 16, 8);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    CHECK(search_baseline(pq, qs.row(qi), 10, 2) == search_baseline(opq, qs.row(qi), 10, 2));
  }
}

TEST_CASE("MSQ reconstruction preserves the residual norm up to SQ error") {
  const Dataset x = make_clustered({.n = 3000, .dim = 24, .clusters = 30, .seed = 9});
  BuildReport rep;
  const Index idx = build_baseline(IndexKind::kMipsMsq, x, {.m = 6, .n_B = 6, .n_W = 16, .l_SQ = 4},
                                   {.opq_iters = 2}, 2, &rep);
  for (std::size_t pi = 0; pi < idx.partitions.size(); ++pi) {
    const auto& p = idx.partitions[pi];
    for (std::size_t e = 0; e < p.size(); ++e) {
      std::vector<double> r(24);
      for (std::size_t k = 0; k < 24; ++k) r[k] = double(x.row(p.ids[e])[k]) - p.center[k];
      const double level = p.sq.levels[p.sq_codes[e]];
      auto rec = oracle::explicit_msq(idx, p, e);
      const double got = oracle::norm(rec);
      const double unscaled = level != 0.0 ? got / level : 0.0;
      CHECK(std::abs(got - oracle::norm(r)) <= std::abs(level - rep.exact_lambda[pi][e]) * unscaled + 1e-6);
    }
  }
}

TEST_CASE("lossless instances give exact top-k for every MIPS kind") {
  for (auto kind : kAll) {
    if (kind == IndexKind::kL2Opq) continue;
    const auto inst = make_lossless(kind, 1500, 16, 6, 12);
    const Index idx = build_baseline(kind, inst.data, inst.config, inst.options, 12);
    const Dataset qs = make_gaussian(30, 16, 13);
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
      const auto got = search_baseline(idx, qs.row(qi), 5, idx.config.m);
      const auto want = oracle::topk(inst.data, qs.row(qi), 5);
      REQUIRE(got.size() == 5);
      for (std::size_t r = 0; r < 5; ++r) {
        CHECK(oracle::dot(inst.data.row(got[r].id), qs.row(qi)) ==
              Catch::Approx(want[r].score).epsilon(1e-5).margin(1e-5));
      }
    }
  }
  CHECK_THROWS_AS(make_lossless(IndexKind::kL2Opq, 100, 16, 2, 1), InvalidArgument);
}

TEST_CASE("L2-OPQ is exact when every residual is a codeword") {
  // As many codewords as points: k-means keeps every sub-vector.
  const Dataset x = make_gaussian(16, 6, 21);
  const Index idx = build_baseline(IndexKind::kL2Opq, x, {.m = 1, .n_B = 2, .n_W = 16}, {.opq_iters = 0}, 1);
  const Dataset qs = make_gaussian(25, 6, 22);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto got = search_baseline(idx, qs.row(qi), 16, 1);
    const auto want = oracle::topk(x, qs.row(qi), 16);
    REQUIRE(got.size() == 16);
    for (std::size_t r = 0; r < 16; ++r) {
      CHECK(oracle::dot(x.row(got[r].id), qs.row(qi)) == Catch::Approx(want[r].score).epsilon(1e-5).margin(1e-5));
    }
  }
}

TEST_CASE("L2-OPQ scores are negated reconstructed distances") {
  const Dataset x = make_clustered({.n = 2000, .dim = 12, .clusters = 20, .seed = 23});
  const Index idx = build_baseline(IndexKind::kL2Opq, x, {.m = 6, .n_B = 4, .n_W = 16}, {.opq_iters = 2}, 4);
  REQUIRE(idx.l2_transformed);
  const Dataset qs = make_gaussian(10, 12, 24);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto qh = transform_query(qs.row(qi));
    const auto res = search_baseline(idx, qs.row(qi), 30, 3);
    std::set<std::uint32_t> allowed;
    const auto sel = select_partitions_any(idx, qs.row(qi), 3);
    // Partition selection by distance.
    for (std::size_t a = 1; a < sel.size(); ++a) CHECK(sel[a - 1].score >= sel[a].score);
    for (const auto& s : sel) {
      const auto& p = idx.partitions[s.partition];
      std::vector<double> c(p.center.begin(), p.center.end());
      CHECK(s.score == Catch::Approx(-l2sq(qh, c)).epsilon(1e-6));
      for (auto id : p.ids) allowed.insert(id);
    }
    for (const auto& n : res) {
      REQUIRE(allowed.count(n.id));
      // Locate the entry and rebuild its reconstruction independently.
      for (const auto& s : sel) {
        const auto& p = idx.partitions[s.partition];
        for (std::size_t e = 0; e < p.size(); ++e) {
          if (p.ids[e] != n.id) continue;
          auto rec = oracle::explicit_residual(idx, p, e);
          for (std::size_t k = 0; k < rec.size(); ++k) rec[k] += p.center[k];
          CHECK(n.score == Catch::Approx(-l2sq(qh, rec)).epsilon(1e-5).margin(1e-6));
        }
      }
    }
  }
}

TEST_CASE("LOD_MSQ through the baseline entry point is the searcher") {
  const Dataset x = make_clustered({.n = 2000, .dim = 16, .clusters = 20, .seed = 25});
  const Index a = build_baseline(IndexKind::kMipsLodMsq, x, {.m = 5, .n_B = 4, .n_W = 16}, {.opq_iters = 2}, 5);
  const Index b = build_index(x, {.m = 5, .n_B = 4, .n_W = 16}, {.opq_iters = 2}, 5);
  CHECK(a == b);
  const Dataset qs = make_gaussian(15, 16, 26);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    CHECK(search_baseline(a, qs.row(qi), 10, 2) == search(qs.row(qi), 10, b, 2));
  }
}

TEST_CASE("every kind only returns ids from selected partitions") {
  const Dataset x = make_clustered({.n = 2000, .dim = 16, .clusters = 20, .seed = 27});
  const Dataset qs = make_gaussian(10, 16, 28);
  for (auto kind : kAll) {
    const Index idx = build_baseline(kind, x, {.m = 8, .n_B = 4, .n_W = 16}, {.opq_iters = 1}, 6);
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
      std::set<std::uint32_t> allowed;
      for (const auto& s : select_partitions_any(idx, qs.row(qi), 2)) {
        for (auto id : idx.partitions[s.partition].ids) allowed.insert(id);
      }
      for (const auto& n : search_baseline(idx, qs.row(qi), 50, 2)) CHECK(allowed.count(n.id) == 1);
    }
    CHECK(batch_search_baseline(idx, qs, 10, 2, 1) == batch_search_baseline(idx, qs, 10, 2, 4));
  }
}
