#include "lodmsq/opq.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/kernels.hpp"
#include "lodmsq/parallel.hpp"

namespace lodmsq {

Rotation Rotation::identity(std::size_t dim) {
  Rotation r{dim, std::vector<float>(dim * dim, 0.0f)};
  for (std::size_t i = 0; i < dim; ++i) r.matrix[i * dim + i] = 1.0f;
  return r;
}

void Rotation::apply(std::span<const float> x, std::span<float> out) const {
  for (std::size_t i = 0; i < dim; ++i) {
    out[i] = static_cast<float>(lodmsq::dot(matrix.data() + i * dim, x.data(), dim));
  }
}

void Rotation::apply_transpose(std::span<const float> x, std::span<float> out) const {
  std::vector<double> acc(dim, 0.0);
  apply_transpose(x, acc);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(acc[j]);
}

void Rotation::apply_transpose(std::span<const float> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    const double xi = x[i];
    const float* row = matrix.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) out[j] += xi * row[j];
  }
}

double Rotation::orthonormality_error() const {
  double worst = 0.0;
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = 0; b < dim; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        s += static_cast<double>(matrix[i * dim + a]) * matrix[i * dim + b];
      }
      worst = std::max(worst, std::abs(s - (a == b ? 1.0 : 0.0)));
    }
  }
  return worst;
}

bool Rotation::is_identity() const { return *this == identity(dim); }

namespace {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
constexpr std::size_t kRows = 4096;

}  // namespace

Dataset rotate_transpose(const Rotation& r, const Dataset& data, int threads) {
  if (r.dim != data.dim()) throw InvalidArgument("rotation dim does not match data dim");
  if (r.is_identity()) return data;
  const auto d = static_cast<Eigen::Index>(data.dim());
  Dataset out(data.size(), data.dim());
  Eigen::Map<const RowMatF> rot(r.matrix.data(), d, d);
  const std::size_t blocks = (data.size() + kRows - 1) / kRows;
  // Row form of R^T x is x^T R.
  parallel_for(blocks, threads, [&](std::size_t blk) {
    const std::size_t begin = blk * kRows;
    const auto rows = static_cast<Eigen::Index>(std::min(kRows, data.size() - begin));
    Eigen::Map<const RowMatF> x(data.row(begin).data(), rows, d);
    Eigen::Map<RowMatF> y(out.row(begin).data(), rows, d);
    y.noalias() = x * rot;
  });
  return out;
}

namespace {

double pq_error(const PQCodebook& pq, const Dataset& rotated, int threads) {
  std::vector<double> err(rotated.size());
  parallel_for(rotated.size(), threads, [&](std::size_t i) {
    std::vector<PQCode> codes(pq.n_B);
    std::vector<float> rec(pq.dim);
    encode_pq_into(pq, rotated.row(i), codes);
    reconstruct_pq_into(pq, codes, rec);
    err[i] = l2_sq(rotated.row(i).data(), rec.data(), pq.dim);
  });
  double total = 0.0;
  for (double e : err) total += e;
  return total;
}

// Solves max tr(R^T M) over orthonormal R with M = sum x y^T.
bool procrustes(const Dataset& data, const Dataset& recon, Rotation& r) {
  const std::size_t d = data.dim();
  const auto de = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(de, de);
  // Fixed row blocks summed in order keep M independent of threading.
  for (std::size_t begin = 0; begin < data.size(); begin += kRows) {
    const auto rows = static_cast<Eigen::Index>(std::min(kRows, data.size() - begin));
    Eigen::Map<const RowMatF> x(data.row(begin).data(), rows, de);
    Eigen::Map<const RowMatF> y(recon.row(begin).data(), rows, de);
    m.noalias() += x.cast<double>().transpose() * y.cast<double>();
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd rot = svd.matrixU() * svd.matrixV().transpose();
  if (!rot.allFinite()) return false;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      r.matrix[a * d + b] = static_cast<float>(rot(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    }
  }
  return true;
}

}  // namespace

double opq_objective(const Rotation& r, const PQCodebook& pq, const Dataset& data, int threads) {
  return pq_error(pq, rotate_transpose(r, data, threads), threads);
}

OPQResult train_opq(const Dataset& data, const OPQOptions& opt) {
  const std::size_t d = data.dim();
  if (opt.n_B == 0 || opt.n_B > d) {
    throw InvalidArgument("train_opq: n_B=" + std::to_string(opt.n_B) + " must be in [1, d=" +
                          std::to_string(d) + "]");
  }
  OPQResult res;
  res.rotation = Rotation::identity(d);
  res.pq = train_pq(data, opt.n_B, opt.n_W, opt.inner_iters, opt.seed, opt.threads);
  res.objective.push_back(pq_error(res.pq, data, opt.threads));

  Dataset rotated = data;
  Dataset recon(data.size(), d);
  for (int outer = 0; outer < opt.outer_iters; ++outer) {
    parallel_for(rotated.size(), opt.threads, [&](std::size_t i) {
      std::vector<PQCode> codes(res.pq.n_B);
      encode_pq_into(res.pq, rotated.row(i), codes);
      reconstruct_pq_into(res.pq, codes, recon.row(i));
    });
    Rotation next = res.rotation;
    if (!procrustes(data, recon, next)) {
      res.svd_fallback = true;
      res.rotation = Rotation::identity(d);
      res.pq = train_pq(data, opt.n_B, opt.n_W, opt.inner_iters, opt.seed, opt.threads);
      res.objective.push_back(pq_error(res.pq, data, opt.threads));
      break;
    }
    res.rotation = std::move(next);
    rotated = rotate_transpose(res.rotation, data, opt.threads);
    for (std::size_t b = 0; b < res.pq.n_B; ++b) {
      const Dataset sub = slice_columns(rotated, res.pq.offsets[b], res.pq.offsets[b + 1]);
      VQCodebook cb{sub.dim(), res.pq.codebooks[b]};
      refine_vq(sub, cb, opt.refine_iters, opt.threads);
      res.pq.codebooks[b] = std::move(cb.centers);
    }
    res.objective.push_back(pq_error(res.pq, rotated, opt.threads));
  }
  return res;
}

}  // namespace lodmsq
