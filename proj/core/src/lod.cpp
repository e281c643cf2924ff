#include "lodmsq/lod.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "lodmsq/error.hpp"

namespace lodmsq {

double dot_d(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

std::vector<double> proj_parallel(std::span<const double> v, std::span<const double> x) {
  if (v.size() != x.size()) throw InvalidArgument("proj_parallel: dim mismatch");
  const double a = dot_d(x, v);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * v[i];
  return out;
}

std::vector<double> proj_orth(std::span<const double> v, std::span<const double> x) {
  if (v.size() != x.size()) throw InvalidArgument("proj_orth: dim mismatch");
  const double a = dot_d(x, v);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - a * v[i];
  return out;
}

std::vector<float> proj_dir_center(std::span<const float> center) {
  double n2 = 0.0;
  for (float c : center) n2 += static_cast<double>(c) * c;
  if (n2 == 0.0) throw InvalidArgument("proj_dir_center: zero-norm center");
  const double inv = 1.0 / std::sqrt(n2);
  std::vector<float> v(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) v[i] = static_cast<float>(center[i] * inv);
  return v;
}

std::vector<float> proj_dir_query_pca(const Dataset& queries) {
  if (queries.size() < 2) {
    throw InvalidArgument("proj_dir_query_pca: need at least 2 queries, got " +
                          std::to_string(queries.size()));
  }
  const auto d = static_cast<Eigen::Index>(queries.dim());
  Eigen::MatrixXd moment = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto q = queries.row(i);
    Eigen::VectorXd x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = q[static_cast<std::size_t>(j)];
    moment.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  moment = moment.selfadjointView<Eigen::Lower>();
  moment /= static_cast<double>(queries.size());
  if (moment.cwiseAbs().maxCoeff() == 0.0) {
    throw InvalidArgument("proj_dir_query_pca: zero second-moment matrix");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(moment);
  if (eig.info() != Eigen::Success) throw NumericalError("proj_dir_query_pca: eigensolver failed");
  Eigen::VectorXd top = eig.eigenvectors().col(d - 1);
  top.normalize();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (top(j) != 0.0) {
      if (top(j) < 0.0) top = -top;
      break;
    }
  }
  std::vector<float> v(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = static_cast<float>(top(j));
  return v;
}

ScaleResult compute_scale(std::span<const double> o, std::span<const double> recon,
                          std::span<const double> v) {
  const auto orth = proj_orth(v, recon);
  const double den = std::sqrt(dot_d(orth, orth));
  if (den == 0.0) return {0.0, true};
  return {std::sqrt(dot_d(o, o)) / den, false};
}

double compute_z(std::span<const double> r, std::span<const double> msq_recon,
                 std::span<const double> v) {
  double z = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) z += (r[i] - msq_recon[i]) * v[i];
  return z;
}

}  // namespace lodmsq
