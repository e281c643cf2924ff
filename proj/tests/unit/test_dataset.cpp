#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "lodmsq/dataset.hpp"
#include "lodmsq/error.hpp"
#include "lodmsq/synthetic.hpp"
#include "oracles.hpp"

using namespace lodmsq;
using Catch::Matchers::ContainsSubstring;

namespace {

void write_raw(const std::filesystem::path& p, const std::vector<std::int32_t>& words) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * 4));
}

std::int32_t f2i(float f) {
  std::int32_t i;
  std::memcpy(&i, &f, 4);
  return i;
}

}  // namespace

TEST_CASE("load_fvecs reads two 2-d records") {
  oracle::TempDir dir;
  write_raw(dir / "a.fvecs", {2, f2i(1.f), f2i(0.f), 2, f2i(0.f), f2i(1.f)});
  const Dataset d = load_fvecs(dir / "a.fvecs");
  CHECK(d.size() == 2);
  CHECK(d.dim() == 2);
  CHECK(d == Dataset(2, {1, 0, 0, 1}));
}

TEST_CASE("load_fvecs rejects empty, ragged, truncated and non-finite files") {
  oracle::TempDir dir;
  write_raw(dir / "empty.fvecs", {});
  CHECK_THROWS_WITH(load_fvecs(dir / "empty.fvecs"), ContainsSubstring("no records"));

  write_raw(dir / "ragged.fvecs", {2, f2i(1.f), f2i(0.f), 3, f2i(0.f), f2i(1.f), f2i(2.f)});
  CHECK_THROWS_AS(load_fvecs(dir / "ragged.fvecs"), FormatError);
  CHECK_THROWS_WITH(load_fvecs(dir / "ragged.fvecs"), ContainsSubstring("dimension mismatch"));

  write_raw(dir / "short.fvecs", {2, f2i(1.f)});
  CHECK_THROWS_AS(load_fvecs(dir / "short.fvecs"), FormatError);

  write_raw(dir / "nan.fvecs", {1, f2i(std::numeric_limits<float>::quiet_NaN())});
  CHECK_THROWS_AS(load_fvecs(dir / "nan.fvecs"), FormatError);

  CHECK_THROWS_AS(load_fvecs(dir / "missing.fvecs"), IoError);
}

TEST_CASE("save_vecs round trip is bit exact") {
  oracle::TempDir dir;
  const Dataset one(2, {1, 2});
  save_fvecs(one, dir / "one.fvecs");
  CHECK(load_fvecs(dir / "one.fvecs") == one);

  // Awkward values: denormals, signed zero, extremes.
  Dataset odd(4, {std::numeric_limits<float>::denorm_min(), -0.0f,
                  std::numeric_limits<float>::max(), -std::numeric_limits<float>::lowest()});
  save_fvecs(odd, dir / "odd.fvecs");
  const Dataset back = load_fvecs(dir / "odd.fvecs");
  REQUIRE(back.size() == 1);
  CHECK(std::memcmp(back.values().data(), odd.values().data(), 16) == 0);

  const Dataset rnd = make_gaussian(1000, 7, 3);
  save_fvecs(rnd, dir / "r.fvecs");
  CHECK(std::filesystem::file_size(dir / "r.fvecs") == 1000 * (4 + 4 * 7));
  CHECK(load_fvecs(dir / "r.fvecs") == rnd);
}

TEST_CASE("save_vecs refuses an empty dataset") {
  oracle::TempDir dir;
  CHECK_THROWS_AS(save_fvecs(Dataset(), dir / "e.fvecs"), InvalidArgument);
}

TEST_CASE("ivecs and variable-length fvecs round trip") {
  oracle::TempDir dir;
  const std::vector<std::vector<std::int32_t>> ids = {{3, 1, 2}, {0, -1, 7}};
  save_ivecs(ids, dir / "g.ivecs");
  CHECK(load_ivecs(dir / "g.ivecs") == ids);
  const std::vector<std::vector<float>> rows = {{1.5f}, {2.f, -3.f}};
  save_fvecs_rows(rows, dir / "g.fvecs");
  CHECK(load_fvecs_rows(dir / "g.fvecs") == rows);
}

TEST_CASE("l2_normalize") {
  const Dataset out = l2_normalize(Dataset(2, {3, 4, 1, 0}));
  CHECK(out.row(0)[0] == Catch::Approx(0.6f));
  CHECK(out.row(0)[1] == Catch::Approx(0.8f));
  CHECK(out.row(1)[0] == 1.0f);
  CHECK(out.row(1)[1] == 0.0f);
  CHECK_THROWS_AS(l2_normalize(Dataset(2, {0, 0})), InvalidArgument);

  const Dataset g = l2_normalize(make_gaussian(200, 9, 5));
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(oracle::dot(g.row(i), g.row(i)) == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("brute_force_topk small cases") {
  const Dataset x(2, {1, 0, 0, 1, 2, 0});
  const std::vector<float> q = {1, 0};
  const auto top = brute_force_topk(x, q, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == Neighbor{2, 2.0});
  CHECK(top[1] == Neighbor{0, 1.0});

  const std::vector<float> zero = {0, 0};
  const auto z = brute_force_topk(x, zero, 1);
  CHECK(z[0] == Neighbor{0, 0.0});

  CHECK_THROWS_AS(brute_force_topk(x, q, 4), InvalidArgument);
  const std::vector<float> wrong = {1, 0, 0};
  CHECK_THROWS_AS(brute_force_topk(x, wrong, 1), InvalidArgument);
}

TEST_CASE("brute_force_topk matches an independent exhaustive scan") {
  const Dataset x = make_gaussian(100, 8, 11);
  const Dataset qs = make_gaussian(20, 8, 12);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const auto got = brute_force_topk(x, qs.row(qi), 10);
    const auto want = oracle::topk(x, qs.row(qi), 10);
    REQUIRE(got.size() == want.size());
    for (std::size_t r = 0; r < got.size(); ++r) {
      CHECK(got[r].id == want[r].id);
      CHECK(got[r].score == want[r].score);
    }
  }
}

TEST_CASE("brute_force_topk with k = N is a full descending permutation") {
  const Dataset x = make_gaussian(64, 5, 2);
  const Dataset q = make_gaussian(1, 5, 3);
  const auto all = brute_force_topk(x, q.row(0), 64);
  std::vector<int> seen(64, 0);
  for (std::size_t r = 0; r < all.size(); ++r) {
    ++seen[all[r].id];
    if (r) CHECK(ranks_before(all[r - 1], all[r]));
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("brute_force_topk breaks ties by id") {
  const Dataset x(1, {1, 3, 3, 2, 3});
  const std::vector<float> q = {1};
  const auto top = brute_force_topk(x, q, 3);
  CHECK(top[0].id == 1);
  CHECK(top[1].id == 2);
  CHECK(top[2].id == 4);
}

TEST_CASE("ground truth is thread-count invariant and query ordered") {
  const Dataset x = make_gaussian(500, 16, 4);
  const Dataset qs = make_gaussian(33, 16, 5);
  const auto a = brute_force_ground_truth(x, qs, 7, 1);
  const auto b = brute_force_ground_truth(x, qs, 7, 4);
  CHECK(a == b);
  for (std::size_t i = 0; i < qs.size(); ++i) CHECK(a[i] == brute_force_topk(x, qs.row(i), 7));
}

TEST_CASE("dataset_hash separates contents") {
  const Dataset a(2, {1, 2});
  const Dataset b(2, {1, 3});
  const Dataset c(1, {1, 2});
  CHECK(dataset_hash(a) == dataset_hash(Dataset(2, {1, 2})));
  CHECK(dataset_hash(a) != dataset_hash(b));
  CHECK(dataset_hash(a) != dataset_hash(c));
}
