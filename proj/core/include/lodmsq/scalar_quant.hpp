#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace lodmsq {

/// Uniform quantizer: decode(k) = step * k + offset, k in [-2^(bits-1), 2^(bits-1) - 1].
struct UQParams {
  double step = 1.0;
  double offset = 0.0;
  int bits = 8;

  std::int32_t min_code() const { return -(std::int32_t{1} << (bits - 1)); }
  std::int32_t max_code() const { return (std::int32_t{1} << (bits - 1)) - 1; }

  bool operator==(const UQParams&) const = default;
};

/// Quantiles used for z_min / z_max. {0, 1} disables clipping.
struct ClipQuantiles {
  double low = 0.01;
  double high = 0.99;
};

/// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::span<const double> values, double q);

UQParams train_uq(std::span<const double> values, int bits, ClipQuantiles clip = {});

/// round((z - offset) / step), half away from zero, clipped to the signed range.
std::int32_t encode_uq(const UQParams& p, double z);
inline double decode_uq(const UQParams& p, std::int32_t code) { return p.step * code + p.offset; }

/// Non-uniform scalar codebook, strictly ascending levels.
struct SQCodebook {
  std::vector<double> levels;

  bool operator==(const SQCodebook&) const = default;
};

/// 1-d Lloyd with 2^bits levels seeded at evenly spaced quantiles.
/// Duplicate or empty levels collapse, so the codebook may be shorter.
SQCodebook train_sq(std::span<const double> values, int bits, int max_iters = 100);

/// Nearest level; ties go to the smaller code. Returns (code, level).
std::pair<std::uint32_t, double> quantize_sq(const SQCodebook& cb, double z);

}  // namespace lodmsq
