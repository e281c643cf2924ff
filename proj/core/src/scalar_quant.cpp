#include "lodmsq/scalar_quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lodmsq/error.hpp"

namespace lodmsq {

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

UQParams train_uq(std::span<const double> values, int bits, ClipQuantiles clip) {
  if (values.empty()) throw InvalidArgument("train_uq: empty input");
  if (bits < 1 || bits > 30) throw InvalidArgument("train_uq: bits must be in [1, 30]");
  if (!(clip.low >= 0.0 && clip.low <= clip.high && clip.high <= 1.0)) {
    throw InvalidArgument("train_uq: clip quantiles must satisfy 0 <= low <= high <= 1");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("train_uq: non-finite value");
  }
  const double z_max = quantile(values, clip.high);
  const double z_min = quantile(values, clip.low);
  UQParams p;
  p.bits = bits;
  if (z_max == z_min) {
    p.step = 1.0;
    p.offset = z_min;
    return p;
  }
  p.step = (z_max - z_min) / (std::ldexp(1.0, bits) - 1.0);
  p.offset = (z_max + z_min + p.step) / 2.0;
  return p;
}

std::int32_t encode_uq(const UQParams& p, double z) {
  const double t = std::round((z - p.offset) / p.step);  // half away from zero
  const double lo = p.min_code();
  const double hi = p.max_code();
  if (!(t >= lo)) return p.min_code();  // also catches NaN
  if (t > hi) return p.max_code();
  return static_cast<std::int32_t>(t);
}

SQCodebook train_sq(std::span<const double> values, int bits, int max_iters) {
  if (values.empty()) throw InvalidArgument("train_sq: empty input");
  if (bits < 0 || bits > 16) throw InvalidArgument("train_sq: bits must be in [0, 16]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t k = std::size_t{1} << bits;

  std::vector<double> levels;
  for (std::size_t i = 0; i < k; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    const auto idx = std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)));
    levels.push_back(sorted[idx]);
  }
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  // Lloyd on sorted data: each level owns a contiguous run.
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> sum(levels.size(), 0.0);
    std::vector<std::size_t> cnt(levels.size(), 0);
    std::size_t j = 0;
    for (double v : sorted) {
      while (j + 1 < levels.size() && std::abs(v - levels[j + 1]) < std::abs(v - levels[j])) ++j;
      sum[j] += v;
      ++cnt[j];
    }
    std::vector<double> next;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      if (cnt[l] > 0) next.push_back(sum[l] / static_cast<double>(cnt[l]));
    }
    next.erase(std::unique(next.begin(), next.end()), next.end());
    if (next == levels) break;
    levels = std::move(next);
  }
  return SQCodebook{std::move(levels)};
}

std::pair<std::uint32_t, double> quantize_sq(const SQCodebook& cb, double z) {
  if (cb.levels.empty()) throw InvalidArgument("quantize_sq: empty codebook");
  std::uint32_t best = 0;
  double bd = std::abs(z - cb.levels[0]);
  for (std::uint32_t i = 1; i < cb.levels.size(); ++i) {
    const double d = std::abs(z - cb.levels[i]);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return {best, cb.levels[best]};
}

}  // namespace lodmsq
