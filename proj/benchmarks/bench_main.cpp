#include <benchmark/benchmark.h>

#include "lodmsq/index.hpp"
#include "lodmsq/search.hpp"
#include "lodmsq/synthetic.hpp"
#include "lodmsq/vq.hpp"

using namespace lodmsq;

namespace {

struct Fixture {
  Dataset data;
  Dataset queries;
  Index index;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.data = make_clustered({.n = 50000, .dim = 128, .clusters = 500, .seed = 1});
    x.queries = make_noisy_queries(x.data, 256, 0.1, 2);
    x.index = build_index(x.data, {.m = 50, .n_B = 23, .n_W = 16, .l_UQ = 8, .l_SQ = 4},
                          {.opq_iters = 5}, 3);
    return x;
  }();
  return f;
}

void BM_AdcTables(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<double> qr(f.data.dim());
  std::size_t i = 0;
  for (auto _ : state) {
    f.index.rotation.apply_transpose(f.queries.row(i++ % f.queries.size()), std::span<double>(qr));
    benchmark::DoNotOptimize(build_adc_tables(qr, f.index.pq));
  }
}
BENCHMARK(BM_AdcTables);

void BM_Search(benchmark::State& state) {
  const auto& f = fixture();
  const auto m_adc = static_cast<std::size_t>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(search(f.queries.row(i++ % f.queries.size()), 10, f.index, m_adc));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(BM_Search)->Arg(1)->Arg(5)->Arg(20);

void BM_VqAssign(benchmark::State& state) {
  const auto& f = fixture();
  const auto cb = train_vq(f.data, 50, 2, 4, 1);
  for (auto _ : state) benchmark::DoNotOptimize(assign_all(cb, f.data, 1));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * f.data.size()));
}
BENCHMARK(BM_VqAssign)->Unit(benchmark::kMillisecond);

}  // namespace
