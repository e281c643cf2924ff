#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "lodmsq/dataset.hpp"

namespace lodmsq {

/// Mean over queries of the mean over residuals of ((q.v)(r.v))^2.
/// Pass a single query for the fixed-query form.
double projected_ip_variance(const Dataset& residuals, const Dataset& queries,
                             std::span<const double> v);

struct VarianceProfile {
  std::vector<double> angles;
  std::vector<double> variances;
  std::vector<double> u1;
  std::vector<double> u2;

  double max_min_ratio() const;
};

/// Directions v_i = cos(2 pi i / n_v) u1 + sin(2 pi i / n_v) u2 with u1 = c / ||c||
/// and u2 a seeded random unit vector orthogonal to u1.
VarianceProfile variance_profile(const Dataset& residuals, const Dataset& queries,
                                 std::span<const float> center, std::size_t n_v,
                                 std::uint64_t seed);

/// Columns angle,x,y,var where (x, y) = var * (cos, sin).
void write_profile_csv(const VarianceProfile& p, std::ostream& out);

struct BoundValue {
  double value = 0.0;
  /// The power argument exceeded 1 (or the weak form's max clamped), so value is 0.
  bool clamped = false;
};

/// sqrt(1 - (eta1 sqrt(d) log(1/delta) / m)^(2/(d+1))).
BoundValue l1_bound(double m, std::size_t d, double delta, double eta1);

inline constexpr double kWeakAlpha = 1.2642411176571153;  // 2 (1 - e^-1)

/// sqrt(alpha max((log(m / sqrt d) - log(eta1 log 1/delta)) / (d + 1), 0)).
BoundValue l1_weak_bound(double m, std::size_t d, double delta, double eta1);

/// F(y) = (1/Z) int_{-1}^{y} (1 - x^2)^((d-1)/2) dx via the regularized incomplete beta.
double max_coord_cdf(double y, std::size_t d);

/// Solves F(h)^m = delta by bisection, |F(h)^m - delta| <= 1e-9. Requires d >= 2.
double max_cos_quantile_exact(std::size_t m, std::size_t d, double delta);

/// delta-quantile of max_i cos(q, c_i) for m centers uniform on the unit sphere
/// of R^ambient_d. The first coordinate there has exponent (ambient_d - 3)/2,
/// i.e. F with d = ambient_d - 2. Requires ambient_d >= 3.
double sphere_max_cos_quantile(std::size_t m, std::size_t ambient_d, double delta);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

/// E (x.y)^2 over independent uniform unit vectors in R^d.
MonteCarloEstimate lemma1_mc(std::size_t d, std::size_t n_samples, std::uint64_t seed,
                             int threads = 1);

struct L2Bound {
  double value = 0.0;
  /// 0-based i attaining the max.
  std::size_t argmax = 0;
  /// (h_{ceil(m/2)} / h_1) L1(ceil(m/2), delta).
  double witness = 0.0;
};

/// max_i (h_i / h_1) L1(i, delta) over norms sorted descending.
L2Bound l2_bound(std::span<const double> sorted_norms, double delta, std::size_t d, double eta1);

/// gamma < (d - 2) L2^2. Requires d >= 3 and gamma >= 1.
bool theorem3_check(double gamma, std::size_t d, double l2_value);

/// gamma < eta2 (log(m / sqrt d) - log(eta1 log 1/delta)).
bool theorem3_weak_check(double gamma, double m, std::size_t d, double delta, double eta1,
                         double eta2);

/// Empirical delta-quantile of max_i cos(q, c_i), m centers uniform on the sphere
/// in R^d, over n_trials seeded trials.
double empirical_max_cos(std::size_t m, std::size_t d, double delta, std::size_t n_trials,
                         std::uint64_t seed, int threads = 1);

struct SweepPoint {
  std::size_t m = 0;
  std::size_t d = 0;
  double delta = 0.0;
};

/// Smallest eta1 with l1_bound <= max_cos_quantile_exact at every sweep point
/// (times 1 + 1e-9). Every larger eta1 also satisfies the inequality.
double calibrate_eta1(std::span<const SweepPoint> sweep);

}  // namespace lodmsq
