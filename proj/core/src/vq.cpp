#include "lodmsq/vq.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <random>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/kernels.hpp"
#include "lodmsq/parallel.hpp"
#include "lodmsq/random.hpp"

namespace lodmsq {
namespace {

constexpr std::size_t kBlock = 1024;

std::uint32_t nearest(const VQCodebook& cb, const float* x, float* best_dist) {
  std::uint32_t best = 0;
  float bd = std::numeric_limits<float>::infinity();
  const std::size_t m = cb.count();
  for (std::size_t j = 0; j < m; ++j) {
    const float d = l2_sq(x, cb.centers.data() + j * cb.dim, cb.dim);
    if (d < bd) {
      bd = d;
      best = static_cast<std::uint32_t>(j);
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Low-dimensional problems (PQ subspaces) use the direct scan.
bool use_gemm(const VQCodebook& cb) { return cb.count() >= 8 && cb.dim >= 32; }

// Distances via ||x||^2 - 2 x.c + ||c||^2 from one GEMM per block; every center
// within the rounding slack of the minimum is rescored with l2_sq, so the result
// equals nearest() exactly.
void assign_block_gemm(const VQCodebook& cb, const std::vector<float>& cnorm, float cmax,
                       const Dataset& data, std::size_t begin, std::size_t end,
                       std::uint32_t* assign, float* dist) {
  const std::size_t d = cb.dim;
  const std::size_t m = cb.count();
  const auto rows = static_cast<Eigen::Index>(end - begin);
  Eigen::Map<const RowMatF> x(data.row(begin).data(), rows, static_cast<Eigen::Index>(d));
  Eigen::Map<const RowMatF> c(cb.centers.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  const RowMatF g = x * c.transpose();
  const float slack_scale = static_cast<float>(d + 16) * 4.0f * std::numeric_limits<float>::epsilon();
  for (Eigen::Index r = 0; r < rows; ++r) {
    const float* xr = data.row(begin + static_cast<std::size_t>(r)).data();
    const auto xx = static_cast<float>(norm_sq(xr, d));
    const float* gr = g.data() + r * static_cast<Eigen::Index>(m);
    float amin = std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < m; ++j) amin = std::min(amin, cnorm[j] - 2.0f * gr[j]);
    const float slack = slack_scale * (xx + cmax) * 2.0f;
    std::uint32_t best = 0;
    float bd = std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (cnorm[j] - 2.0f * gr[j] > amin + slack) continue;
      const float dd = l2_sq(xr, cb.centers.data() + j * d, d);
      if (dd < bd) {
        bd = dd;
        best = static_cast<std::uint32_t>(j);
      }
    }
    assign[r] = best;
    dist[r] = bd;
  }
}

void assign_blocked(const VQCodebook& cb, const Dataset& data, std::vector<std::uint32_t>& assign,
                    std::vector<float>& dist, int threads) {
  const std::size_t n = data.size();
  assign.resize(n);
  dist.resize(n);
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  if (use_gemm(cb)) {
    std::vector<float> cnorm(cb.count());
    float cmax = 0.0f;
    for (std::size_t j = 0; j < cb.count(); ++j) {
      cnorm[j] = static_cast<float>(norm_sq(cb.centers.data() + j * cb.dim, cb.dim));
      cmax = std::max(cmax, cnorm[j]);
    }
    parallel_for(blocks, threads, [&](std::size_t b) {
      const std::size_t begin = b * kBlock, end = std::min(n, (b + 1) * kBlock);
      assign_block_gemm(cb, cnorm, cmax, data, begin, end, assign.data() + begin, dist.data() + begin);
    });
    return;
  }
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      assign[i] = nearest(cb, data.row(i).data(), &dist[i]);
    }
  });
}

VQCodebook kmeanspp_init(const Dataset& data, std::size_t m, std::uint64_t seed) {
  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  Rng rng(seed);
  VQCodebook cb{d, std::vector<float>(m * d)};
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < m; ++c) {
    chosen[pick] = 1;
    std::copy_n(data.row(pick).data(), d, cb.center(c).data());
    if (c + 1 == m) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dd = l2_sq(data.row(i).data(), cb.center(c).data(), d);
      d2[i] = std::min(d2[i], dd);
      total += d2[i];
    }
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      pick = n;
      std::size_t last_positive = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        last_positive = i;
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = last_positive;
    } else {
      // Every point coincides with a chosen center: take the first unchosen row.
      pick = 0;
      while (pick < n && chosen[pick]) ++pick;
      if (pick == n) pick = 0;
    }
  }
  return cb;
}

// Moves the farthest point of the largest cluster into each empty cluster.
void repair_empty(const VQCodebook& cb, const Dataset& data, std::vector<std::uint32_t>& assign,
                  std::vector<float>& dist, std::vector<std::size_t>& counts,
                  VQCodebook& next) {
  const std::size_t m = cb.count();
  for (std::size_t j = 0; j < m; ++j) {
    if (counts[j] != 0) continue;
    const std::size_t largest =
        static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::size_t far = data.size();
    float far_d = -1.0f;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (assign[i] == largest && dist[i] > far_d) {
        far_d = dist[i];
        far = i;
      }
    }
    if (far == data.size()) break;
    assign[far] = static_cast<std::uint32_t>(j);
    dist[far] = 0.0f;
    --counts[largest];
    ++counts[j];
    std::copy_n(data.row(far).data(), cb.dim, next.center(j).data());
  }
}

}  // namespace

void refine_vq(const Dataset& data, VQCodebook& cb, int max_iters, int threads,
               VQTrainStats* stats) {
  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  const std::size_t m = cb.count();
  if (cb.dim != d) throw InvalidArgument("codebook dim does not match data dim");
  std::vector<std::uint32_t> assign, prev;
  std::vector<float> dist;
  std::vector<double> sums(m * d);
  std::vector<std::size_t> counts(m);

  for (int it = 0; it < max_iters; ++it) {
    assign_blocked(cb, data, assign, dist, threads);
    std::fill(counts.begin(), counts.end(), 0);
    for (auto a : assign) ++counts[a];
    VQCodebook next = cb;
    repair_empty(cb, data, assign, dist, counts, next);

    if (stats) {
      double total = 0.0;
      for (float v : dist) total += v;
      stats->distortion.push_back(total);
      stats->iterations = it + 1;
    }
    if (assign == prev) {
      if (stats) stats->converged = true;
      return;
    }

    // Means accumulated serially in row order so the result is thread-count invariant.
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double* s = sums.data() + assign[i] * d;
      const float* x = data.row(i).data();
      for (std::size_t k = 0; k < d; ++k) s[k] += x[k];
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (counts[j] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[j]);
      for (std::size_t k = 0; k < d; ++k) {
        next.centers[j * d + k] = static_cast<float>(sums[j * d + k] * inv);
      }
    }
    cb = std::move(next);
    prev.swap(assign);
  }
}

VQCodebook train_vq(const Dataset& data, std::size_t m, int max_iters, std::uint64_t seed,
                    int threads, VQTrainStats* stats) {
  if (m < 1) throw InvalidArgument("train_vq: m must be >= 1");
  if (m > data.size()) {
    throw InvalidArgument("train_vq: m=" + std::to_string(m) + " exceeds N=" +
                          std::to_string(data.size()));
  }
  VQCodebook cb = kmeanspp_init(data, m, seed);
  refine_vq(data, cb, max_iters, threads, stats);
  return cb;
}

std::uint32_t assign_vq(const VQCodebook& cb, std::span<const float> x) {
  if (x.size() != cb.dim) {
    throw InvalidArgument("assign_vq: dim " + std::to_string(x.size()) + " != " +
                          std::to_string(cb.dim));
  }
  if (cb.count() == 0) throw InvalidArgument("assign_vq: empty codebook");
  return nearest(cb, x.data(), nullptr);
}

std::vector<std::uint32_t> assign_all(const VQCodebook& cb, const Dataset& data, int threads) {
  if (data.dim() != cb.dim) throw InvalidArgument("assign_all: dim mismatch");
  std::vector<std::uint32_t> assign;
  std::vector<float> dist;
  assign_blocked(cb, data, assign, dist, threads);
  return assign;
}

double vq_distortion(const VQCodebook& cb, const Dataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    float d;
    nearest(cb, data.row(i).data(), &d);
    total += d;
  }
  return total;
}

}  // namespace lodmsq
