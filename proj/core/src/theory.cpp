#include "lodmsq/theory.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/parallel.hpp"
#include "lodmsq/random.hpp"
#include "lodmsq/scalar_quant.hpp"

namespace lodmsq {

namespace {

double dot_fd(std::span<const float> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must be in (0, 1)");
}

// F with exponent e = (d_eff - 1) / 2, d_eff >= 1.
double coord_cdf(double y, double d_eff) {
  if (y <= -1.0) return 0.0;
  if (y >= 1.0) return 1.0;
  const double a = (d_eff + 1.0) / 2.0;
  // (1 - x^2) = 4 t (1 - t) with t = (1 + x) / 2
  if (y <= 0.0) return boost::math::ibeta(a, a, (1.0 + y) / 2.0);
  return boost::math::ibetac(a, a, (1.0 - y) / 2.0);
}

double quantile_bisect(std::size_t m, double d_eff, double delta) {
  if (m < 1) throw InvalidArgument("m must be >= 1");
  check_delta(delta);
  const double md = static_cast<double>(m);
  double lo = -1.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (std::pow(coord_cdf(mid, d_eff), md) < delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double h = 0.5 * (lo + hi);
  const double err = std::abs(std::pow(coord_cdf(h, d_eff), md) - delta);
  if (err > 1e-9) {
    throw NumericalError("max-cosine quantile bisection did not reach 1e-9 (residual " +
                         std::to_string(err) + ")");
  }
  return h;
}

}  // namespace

double projected_ip_variance(const Dataset& residuals, const Dataset& queries,
                             std::span<const double> v) {
  if (residuals.empty() || queries.empty()) throw InvalidArgument("projected_ip_variance: empty input");
  if (residuals.dim() != v.size() || queries.dim() != v.size()) {
    throw InvalidArgument("projected_ip_variance: dim mismatch");
  }
  // sum_q sum_r ((q.v)(r.v))^2 factorises into (sum_q (q.v)^2)(sum_r (r.v)^2).
  double sq = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double t = dot_fd(queries.row(i), v);
    sq += t * t;
  }
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double t = dot_fd(residuals.row(i), v);
    sr += t * t;
  }
  return (sq / static_cast<double>(queries.size())) * (sr / static_cast<double>(residuals.size()));
}

double VarianceProfile::max_min_ratio() const {
  if (variances.empty()) return 0.0;
  const auto [mn, mx] = std::minmax_element(variances.begin(), variances.end());
  if (*mn == 0.0) return std::numeric_limits<double>::infinity();
  return *mx / *mn;
}

VarianceProfile variance_profile(const Dataset& residuals, const Dataset& queries,
                                 std::span<const float> center, std::size_t n_v,
                                 std::uint64_t seed) {
  if (n_v < 3) throw InvalidArgument("variance_profile: n_v must be >= 3");
  const std::size_t d = center.size();
  if (d < 2) throw InvalidArgument("variance_profile: need d >= 2");
  VarianceProfile p;
  p.u1.assign(center.begin(), center.end());
  double n1 = 0.0;
  for (double x : p.u1) n1 += x * x;
  if (n1 == 0.0) throw InvalidArgument("variance_profile: zero-norm center");
  n1 = std::sqrt(n1);
  for (double& x : p.u1) x /= n1;

  Rng rng(seed);
  std::normal_distribution<double> g;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100) throw NumericalError("variance_profile: cannot draw u2");
    p.u2.resize(d);
    for (double& x : p.u2) x = g(rng);
    double a = 0.0;
    for (std::size_t i = 0; i < d; ++i) a += p.u2[i] * p.u1[i];
    for (std::size_t i = 0; i < d; ++i) p.u2[i] -= a * p.u1[i];
    double n2 = 0.0;
    for (double x : p.u2) n2 += x * x;
    if (n2 > 1e-12) {
      n2 = std::sqrt(n2);
      for (double& x : p.u2) x /= n2;
      break;
    }
  }

  p.angles.resize(n_v);
  p.variances.resize(n_v);
  std::vector<double> v(d);
  for (std::size_t i = 0; i < n_v; ++i) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_v);
    double c = std::cos(ang), s = std::sin(ang);
    // Quarter turns are exact so that n_v = 4 gives +-u1, +-u2.
    if ((4 * i) % n_v == 0) {
      static constexpr double kc[4] = {1.0, 0.0, -1.0, 0.0};
      static constexpr double ks[4] = {0.0, 1.0, 0.0, -1.0};
      const std::size_t quarter = 4 * i / n_v;
      c = kc[quarter];
      s = ks[quarter];
    }
    for (std::size_t k = 0; k < d; ++k) v[k] = c * p.u1[k] + s * p.u2[k];
    p.angles[i] = ang;
    p.variances[i] = projected_ip_variance(residuals, queries, v);
  }
  return p;
}

void write_profile_csv(const VarianceProfile& p, std::ostream& out) {
  out << "angle,x,y,var\n";
  char buf[160];
  for (std::size_t i = 0; i < p.angles.size(); ++i) {
    const double a = p.angles[i], v = p.variances[i];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g\n", a, v * std::cos(a), v * std::sin(a), v);
    out << buf;
  }
}

BoundValue l1_bound(double m, std::size_t d, double delta, double eta1) {
  check_delta(delta);
  if (m <= 0.0 || d < 1 || eta1 <= 0.0) throw InvalidArgument("l1_bound: m, d, eta1 must be positive");
  const double base = eta1 * std::sqrt(static_cast<double>(d)) * std::log(1.0 / delta) / m;
  const double inner = std::pow(base, 2.0 / (static_cast<double>(d) + 1.0));
  if (inner >= 1.0) return {0.0, inner > 1.0};
  return {std::sqrt(1.0 - inner), false};
}

BoundValue l1_weak_bound(double m, std::size_t d, double delta, double eta1) {
  check_delta(delta);
  if (m <= 0.0 || d < 1 || eta1 <= 0.0) throw InvalidArgument("l1_weak_bound: m, d, eta1 must be positive");
  const double t = (std::log(m / std::sqrt(static_cast<double>(d))) -
                    std::log(eta1 * std::log(1.0 / delta))) /
                   (static_cast<double>(d) + 1.0);
  if (t <= 0.0) return {0.0, true};
  return {std::sqrt(kWeakAlpha * t), false};
}

double max_coord_cdf(double y, std::size_t d) {
  if (d < 1) throw InvalidArgument("max_coord_cdf: d must be >= 1");
  return coord_cdf(y, static_cast<double>(d));
}

double max_cos_quantile_exact(std::size_t m, std::size_t d, double delta) {
  if (d < 2) throw InvalidArgument("max_cos_quantile_exact: d must be >= 2");
  return quantile_bisect(m, static_cast<double>(d), delta);
}

double sphere_max_cos_quantile(std::size_t m, std::size_t ambient_d, double delta) {
  if (ambient_d < 3) throw InvalidArgument("sphere_max_cos_quantile: ambient_d must be >= 3");
  return quantile_bisect(m, static_cast<double>(ambient_d - 2), delta);
}

MonteCarloEstimate lemma1_mc(std::size_t d, std::size_t n_samples, std::uint64_t seed,
                             int threads) {
  if (d < 1) throw InvalidArgument("lemma1_mc: d must be >= 1");
  if (n_samples < 2) throw InvalidArgument("lemma1_mc: need at least 2 samples");
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (n_samples + kBlock - 1) / kBlock;
  std::vector<double> sum(blocks), sum2(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    Rng rng(stream_seed(seed, b));
    std::normal_distribution<double> g;
    std::vector<double> x(d), y(d);
    const std::size_t end = std::min(n_samples, (b + 1) * kBlock);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = b * kBlock; i < end; ++i) {
      double xx = 0.0, yy = 0.0, xy = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        x[k] = g(rng);
        xx += x[k] * x[k];
      }
      for (std::size_t k = 0; k < d; ++k) {
        y[k] = g(rng);
        yy += y[k] * y[k];
        xy += x[k] * y[k];
      }
      const double c2 = (xx == 0.0 || yy == 0.0) ? 0.0 : (xy * xy) / (xx * yy);
      s += c2;
      s2 += c2 * c2;
    }
    sum[b] = s;
    sum2[b] = s2;
  });
  double s = 0.0, s2 = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    s += sum[b];
    s2 += sum2[b];
  }
  const double n = static_cast<double>(n_samples);
  const double mean = s / n;
  const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

L2Bound l2_bound(std::span<const double> h, double delta, std::size_t d, double eta1) {
  if (h.empty()) throw InvalidArgument("l2_bound: empty norm list");
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(h[i] > 0.0)) throw InvalidArgument("l2_bound: norms must be positive");
    if (i > 0 && h[i] > h[i - 1]) throw InvalidArgument("l2_bound: norms must be sorted descending");
  }
  L2Bound out;
  out.value = -1.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double v = (h[i] / h[0]) * l1_bound(static_cast<double>(i + 1), d, delta, eta1).value;
    if (v > out.value) {
      out.value = v;
      out.argmax = i;
    }
  }
  const std::size_t half = (h.size() + 1) / 2;
  out.witness = (h[half - 1] / h[0]) * l1_bound(static_cast<double>(half), d, delta, eta1).value;
  if (out.value < out.witness) throw NumericalError("l2_bound below its witness term");
  return out;
}

bool theorem3_check(double gamma, std::size_t d, double l2_value) {
  if (d < 3) throw InvalidArgument("theorem3_check: d must be >= 3");
  if (gamma < 1.0) throw InvalidArgument("theorem3_check: gamma must be >= 1");
  return gamma < static_cast<double>(d - 2) * l2_value * l2_value;
}

bool theorem3_weak_check(double gamma, double m, std::size_t d, double delta, double eta1,
                         double eta2) {
  if (gamma < 1.0) throw InvalidArgument("theorem3_weak_check: gamma must be >= 1");
  if (eta2 <= 0.0 || eta1 <= 0.0) throw InvalidArgument("theorem3_weak_check: eta1, eta2 must be positive");
  check_delta(delta);
  return gamma < eta2 * (std::log(m / std::sqrt(static_cast<double>(d))) -
                         std::log(eta1 * std::log(1.0 / delta)));
}

double empirical_max_cos(std::size_t m, std::size_t d, double delta, std::size_t n_trials,
                         std::uint64_t seed, int threads) {
  if (m < 1 || d < 2) throw InvalidArgument("empirical_max_cos: need m >= 1 and d >= 2");
  if (n_trials < 1) throw InvalidArgument("empirical_max_cos: need n_trials >= 1");
  check_delta(delta);
  // q = e_1; for a uniform center, cos = g1 / sqrt(g1^2 + chi2_{d-1}).
  std::vector<double> best(n_trials);
  parallel_for(n_trials, threads, [&](std::size_t t) {
    Rng rng(stream_seed(seed, t));
    std::normal_distribution<double> g;
    std::gamma_distribution<double> chi(static_cast<double>(d - 1) / 2.0, 2.0);
    double mx = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double g1 = g(rng);
      const double rest = chi(rng);
      const double den = std::sqrt(g1 * g1 + rest);
      if (den > 0.0) mx = std::max(mx, g1 / den);
    }
    best[t] = mx;
  });
  return quantile(best, delta);
}

double calibrate_eta1(std::span<const SweepPoint> sweep) {
  if (sweep.empty()) throw InvalidArgument("calibrate_eta1: empty sweep");
  double eta = 0.0;
  for (const auto& p : sweep) {
    check_delta(p.delta);
    const double h = std::max(0.0, max_cos_quantile_exact(p.m, p.d, p.delta));
    const double need = static_cast<double>(p.m) *
                        std::pow(1.0 - h * h, (static_cast<double>(p.d) + 1.0) / 2.0) /
                        (std::sqrt(static_cast<double>(p.d)) * std::log(1.0 / p.delta));
    eta = std::max(eta, need);
  }
  return eta * (1.0 + 1e-9);
}

}  // namespace lodmsq
