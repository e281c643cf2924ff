#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "lodmsq/error.hpp"
#include "lodmsq/index.hpp"
#include "lodmsq/lod.hpp"
#include "lodmsq/search.hpp"
#include "lodmsq/synthetic.hpp"
#include "oracles.hpp"

using namespace lodmsq;

namespace {

// Minimal index with hand-set centers and no entries.
Index centers_only(const std::vector<std::vector<float>>& centers) {
  Index idx;
  idx.kind = IndexKind::kMipsPq;
  idx.dim = idx.input_dim = centers[0].size();
  idx.config = {.m = centers.size(), .n_B = 1, .n_W = 2};
  for (const auto& c : centers) {
    Partition p;
    p.center = c;
    idx.partitions.push_back(p);
  }
  return idx;
}

const Index& clustered_index() {
  static const Index idx = [] {
    const Dataset x = make_clustered({.n = 3000, .dim = 32, .clusters = 30, .seed = 40});
    return build_index(x, {.m = 12, .n_B = 8, .n_W = 16, .l_UQ = 8, .l_SQ = 4}, {.opq_iters = 3},
                       41);
  }();
  return idx;
}

}  // namespace

TEST_CASE("select_partitions") {
  const Index idx = centers_only({{3}, {1}, {2}});
  const std::vector<float> q = {1};
  const auto sel = select_partitions(q, idx, 2);
  REQUIRE(sel.size() == 2);
  CHECK(sel[0].partition == 0);
  CHECK(sel[1].partition == 2);
  CHECK(select_partitions(q, idx, 3).size() == 3);
  CHECK_THROWS_AS(select_partitions(q, idx, 4), InvalidArgument);

  const Index tie = centers_only({{1}, {2}, {2}, {0}});
  const auto t = select_partitions(q, tie, 2);
  CHECK(t[0].partition == 1);
  CHECK(t[1].partition == 2);
}

TEST_CASE("select_partitions matches a full sort") {
  std::vector<std::vector<float>> cs;
  const Dataset c = make_gaussian(50, 10, 3);
  for (std::size_t i = 0; i < 50; ++i) cs.emplace_back(c.row(i).begin(), c.row(i).end());
  const Index idx = centers_only(cs);
  const Dataset qs = make_gaussian(30, 10, 4);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto want = oracle::topk(c, qs.row(qi), 7);
    const auto got = select_partitions(qs.row(qi), idx, 7);
    for (std::size_t r = 0; r < 7; ++r) {
      CHECK(got[r].partition == want[r].id);
      CHECK(got[r].score == Catch::Approx(want[r].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("ADC tables") {
  PQCodebook pq;
  pq.dim = 2;
  pq.n_B = 1;
  pq.n_W = 2;
  pq.offsets = {0, 2};
  pq.codebooks = {{1, 0, 0, 1}};
  const std::vector<double> q = {2, 3};
  const auto t = build_adc_tables(q, pq);
  CHECK(t.at(0, 0) == 2.0);
  CHECK(t.at(0, 1) == 3.0);
  CHECK(adc_ip(t, std::vector<PQCode>{1}) == 3.0);
  const auto z = build_adc_tables(std::vector<double>{0, 0}, pq);
  CHECK(std::all_of(z.values.begin(), z.values.end(), [](double v) { return v == 0.0; }));

  PQCodebook zero = pq;
  zero.codebooks = {{0, 0, 1, 1}};
  CHECK(adc_ip(build_adc_tables(q, zero), std::vector<PQCode>{0}) == 0.0);
}

TEST_CASE("ADC sum equals the reconstruction dot product") {
  const Dataset x = make_gaussian(500, 12, 5);
  const auto pq = train_pq(x, 4, 16, 5, 2);
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> code(0, 15);
  const Dataset qs = make_gaussian(100, 12, 6);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto qd = to_double(qs.row(qi));
    const auto t = build_adc_tables(qd, pq);
    std::vector<PQCode> c(4);
    for (auto& a : c) a = static_cast<PQCode>(code(rng));
    const auto rec = reconstruct_pq(pq, c);
    CHECK(adc_ip(t, c) == Catch::Approx(oracle::dot(qs.row(qi), rec)).epsilon(1e-5).margin(1e-9));
  }
}

TEST_CASE("score_entry matches explicit reconstruction") {
  const Index& idx = clustered_index();
  const Dataset qs = make_gaussian(40, 32, 7);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    std::vector<double> qr(32);
    idx.rotation.apply_transpose(qs.row(qi), std::span<double>(qr));
    const auto t = build_adc_tables(qr, idx.pq);
    for (const auto& p : idx.partitions) {
      for (std::size_t e = 0; e < p.size(); e += 7) {
        const double got = score_entry(qs.row(qi), idx, p, e, t);
        const double want = oracle::explicit_residual_ip(idx, p, e, qs.row(qi));
        CHECK(got == Catch::Approx(want).epsilon(1e-5).margin(1e-6));
      }
    }
  }
}

TEST_CASE("zero residual entry scores zero") {
  const Dataset x = make_gaussian(12, 4, 9);
  const Index idx = build_index(x, {.m = 12, .n_B = 2, .n_W = 4}, {}, 1);
  const std::vector<float> q = {1, -2, 3, 0.5f};
  std::vector<double> qr(4);
  idx.rotation.apply_transpose(q, std::span<double>(qr));
  const auto t = build_adc_tables(qr, idx.pq);
  for (const auto& p : idx.partitions) CHECK(score_entry(q, idx, p, 0, t) == 0.0);
}

TEST_CASE("lossless index reproduces brute force top-k") {
  const auto inst = make_lossless(IndexKind::kMipsLodMsq, 2000, 32, 8, 3);
  const Index idx = build_index(inst.data, inst.config, inst.options, 3);
  const Dataset qs = make_gaussian(50, 32, 4);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto got = search(qs.row(qi), 10, idx, idx.config.m);
    const auto want = oracle::topk(inst.data, qs.row(qi), 10);
    REQUIRE(got.size() == 10);
    for (std::size_t r = 0; r < 10; ++r) {
      // Exact ids unless two true scores are within tolerance of each other.
      CHECK(oracle::dot(inst.data.row(got[r].id), qs.row(qi)) ==
            Catch::Approx(want[r].score).epsilon(1e-5).margin(1e-5));
      CHECK(got[r].score == Catch::Approx(want[r].score).epsilon(1e-5).margin(1e-5));
    }
  }
}

TEST_CASE("search structural properties") {
  const Index& idx = clustered_index();
  const Dataset qs = make_gaussian(20, 32, 8);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto q = qs.row(qi);
    const auto small = search(q, 100000, idx, 2);
    const auto big = search(q, 100000, idx, 6);
    // All scored candidates returned when k exceeds them.
    std::size_t expect_small = 0;
    for (const auto& s : select_partitions(q, idx, 2)) expect_small += idx.partitions[s.partition].size();
    CHECK(small.size() == expect_small);
    std::set<std::uint32_t> sa, sb;
    for (const auto& n : small) sa.insert(n.id);
    for (const auto& n : big) sb.insert(n.id);
    CHECK(sa.size() == small.size());
    CHECK(std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()));
    const auto top = search(q, 15, idx, 4);
    for (std::size_t r = 1; r < top.size(); ++r) CHECK(ranks_before(top[r - 1], top[r]));
  }
  CHECK_THROWS_AS(search(qs.row(0), 0, idx, 2), InvalidArgument);
}

TEST_CASE("k = 1 with one single-entry partition") {
  const Dataset x(2, {0, 0, 0.1f, 0, 10, 10});
  const Index idx = build_index(x, {.m = 2, .n_B = 1, .n_W = 2}, {.opq_iters = 0}, 2);
  const std::vector<float> q = {1, 1};
  const auto r = search(q, 1, idx, 1);
  REQUIRE(r.size() == 1);
  CHECK(r[0].id == 2);
  CHECK(r[0].score == Catch::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("scores do not depend on entry storage order") {
  const Index& idx = clustered_index();
  Index shuffled = idx;
  std::mt19937 rng(3);
  for (auto& p : shuffled.partitions) {
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Partition q = p;
    const std::size_t nb = idx.config.n_B;
    for (std::size_t e = 0; e < perm.size(); ++e) {
      q.ids[e] = p.ids[perm[e]];
      std::copy_n(p.pq_codes.begin() + perm[e] * nb, nb, q.pq_codes.begin() + e * nb);
      q.sq_codes[e] = p.sq_codes[perm[e]];
      q.uq_codes[e] = p.uq_codes[perm[e]];
    }
    p = std::move(q);
  }
  const Dataset qs = make_gaussian(20, 32, 11);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    CHECK(search(qs.row(qi), 25, idx, 5) == search(qs.row(qi), 25, shuffled, 5));
  }
}

TEST_CASE("batch_search equals per-query search for any thread count") {
  const Index& idx = clustered_index();
  const Dataset qs = make_gaussian(37, 32, 12);
  const auto a = batch_search(idx, qs, 10, 3, 1);
  const auto b = batch_search(idx, qs, 10, 3, 4);
  CHECK(a == b);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) CHECK(a[qi] == search(qs.row(qi), 10, idx, 3));
}

TEST_CASE("TopK ordering") {
  TopK t(3);
  t.push(5, 1.0);
  t.push(2, 3.0);
  t.push(9, 3.0);
  t.push(1, 0.5);
  t.push(4, 2.0);
  const auto r = t.take();
  REQUIRE(r.size() == 3);
  CHECK(r[0] == Neighbor{2, 3.0});
  CHECK(r[1] == Neighbor{9, 3.0});
  CHECK(r[2] == Neighbor{4, 2.0});
}

TEST_CASE("default m_ADC") {
  CHECK(default_m_adc(20) == 2);
  CHECK(default_m_adc(1000) == 100);
  CHECK(default_m_adc(5) == 1);
}

TEST_CASE("search cost in bits") {
  Index idx = centers_only({{1}, {2}});
  idx.kind = IndexKind::kMipsLodMsq;
  idx.config = {.m = 2, .n_B = 23, .n_W = 16, .l_UQ = 8, .l_SQ = 4};
  idx.partitions[0].ids = {0, 1, 2};
  idx.partitions[1].ids = {3};
  const std::vector<PartitionScore> one = {{2.0, 0}};
  const auto c = search_cost_bits(idx, one);
  CHECK(c.without_scale == 300);
  CHECK(c.with_scale == 312);
  CHECK(search_cost_bits(idx, {}).without_scale == 0);
  idx.config.n_B = 48;
  const std::vector<PartitionScore> two = {{2.0, 1}};
  CHECK(search_cost_bits(idx, two).without_scale == 200);
}
