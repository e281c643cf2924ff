#include "lodmsq/synthetic.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "lodmsq/error.hpp"
#include "lodmsq/pq.hpp"
#include "lodmsq/random.hpp"

namespace lodmsq {

Dataset make_gaussian(std::size_t n, std::size_t dim, std::uint64_t seed, double stddev) {
  Dataset out(n, dim);
  Rng rng(seed);
  fill_gaussian(rng, out.values(), stddev);
  return out;
}

Dataset make_clustered(const ClusteredSpec& s) {
  if (s.n == 0 || s.dim == 0 || s.clusters == 0) throw InvalidArgument("make_clustered: empty spec");
  Rng rng(stream_seed(s.seed, 0));
  std::normal_distribution<double> g;
  std::vector<double> centers(s.clusters * s.dim);
  for (auto& c : centers) c = s.mean_offset + s.center_std * g(rng);
  std::uniform_int_distribution<std::size_t> pick(0, s.clusters - 1);
  Dataset out(s.n, s.dim);
  for (std::size_t i = 0; i < s.n; ++i) {
    const double* c = centers.data() + pick(rng) * s.dim;
    auto row = out.row(i);
    for (std::size_t k = 0; k < s.dim; ++k) row[k] = static_cast<float>(c[k] + s.point_std * g(rng));
  }
  return out;
}

Dataset make_noisy_queries(const Dataset& data, std::size_t count, double noise_std,
                           std::uint64_t seed) {
  if (data.empty()) throw InvalidArgument("make_noisy_queries: empty dataset");
  Rng rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  Dataset out(count, data.dim());
  for (std::size_t i = 0; i < count; ++i) {
    const auto x = data.row(pick(rng));
    auto q = out.row(i);
    for (std::size_t k = 0; k < data.dim(); ++k) q[k] = static_cast<float>(x[k] + noise_std * g(rng));
  }
  return out;
}

Rotation random_rotation(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = g(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Rotation out{dim, std::vector<float>(dim * dim)};
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out.matrix[static_cast<std::size_t>(i * d + j)] = static_cast<float>(q(i, j));
  }
  return out;
}

LosslessInstance make_lossless(IndexKind kind, std::size_t n, std::size_t dim, std::size_t m,
                               std::uint64_t seed) {
  if (kind == IndexKind::kL2Opq) throw InvalidArgument("make_lossless: L2_OPQ is not supported");
  const bool lod = uses_lod(kind);
  const bool scaled = uses_scale(kind);
  LosslessInstance inst;
  IndexConfig& cfg = inst.config;
  cfg.n_W = 16;
  cfg.l_UQ = 8;
  cfg.l_SQ = 4;
  cfg.n_B = std::max<std::size_t>(1, dim / 4);
  cfg.m = m;
  const auto offsets = subspace_offsets(dim, cfg.n_B);
  // One reserved coordinate per subspace: the first one. Directions use these.
  const std::size_t n_dirs = cfg.n_B;
  if (dim < 8 || m < 1 || m > 2 * n_dirs) {
    throw InvalidArgument("make_lossless: need dim >= 8 and 1 <= m <= 2 * (dim / 4)");
  }
  if (n < m) throw InvalidArgument("make_lossless: n < m");

  Rng rng(stream_seed(seed, 10));
  std::normal_distribution<double> g;

  PQCodebook pq;
  pq.dim = dim;
  pq.n_B = cfg.n_B;
  pq.n_W = cfg.n_W;
  pq.offsets = offsets;
  pq.codebooks.resize(cfg.n_B);
  const double radius = 1.0 / std::sqrt(static_cast<double>(cfg.n_B));
  for (std::size_t b = 0; b < cfg.n_B; ++b) {
    const std::size_t w = pq.sub_dim(b);
    pq.codebooks[b].assign(cfg.n_W * w, 0.0f);
    for (std::size_t j = 0; j < cfg.n_W; ++j) {
      std::vector<double> c(w, 0.0);
      double nn = 0.0;
      while (nn < 1e-3) {
        nn = 0.0;
        for (std::size_t k = 1; k < w; ++k) {
          c[k] = g(rng);
          nn += c[k] * c[k];
        }
      }
      nn = std::sqrt(nn);
      for (std::size_t k = 1; k < w; ++k) pq.codebooks[b][j * w + k] = static_cast<float>(radius * c[k] / nn);
    }
  }
  const Rotation rot = kind == IndexKind::kMipsPq ? Rotation::identity(dim)
                                                  : random_rotation(dim, stream_seed(seed, 11));

  // Partition i: direction R e_j, center s * sign * R e_j with j = offsets[i mod n_dirs].
  constexpr double kSpread = 4.0;
  VQCodebook coarse{dim, std::vector<float>(m * dim)};
  std::vector<std::vector<float>> dirs(m, std::vector<float>(dim));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = offsets[i % n_dirs];
    const double sign = i < n_dirs ? 1.0 : -1.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const float col = rot.matrix[k * dim + j];
      dirs[i][k] = col;
      coarse.centers[i * dim + k] = static_cast<float>(kSpread * sign * col);
    }
  }

  SQCodebook sq;
  const std::size_t n_levels = std::size_t{1} << cfg.l_SQ;
  for (std::size_t i = 0; i < n_levels; ++i) sq.levels.push_back(0.2 + static_cast<double>(i) / 15.0);
  const UQParams uq{1.0 / 256.0, 0.0, cfg.l_UQ};

  std::uniform_int_distribution<std::size_t> pick_part(0, m - 1);
  std::uniform_int_distribution<int> pick_code(0, static_cast<int>(cfg.n_W) - 1);
  std::uniform_int_distribution<std::size_t> pick_level(0, n_levels - 1);
  std::uniform_int_distribution<std::int32_t> pick_uq(uq.min_code(), uq.max_code());

  inst.data = Dataset(n, dim);
  std::vector<float> w(dim), rw(dim);
  for (std::size_t i = 0; i < n; ++i) {
    // First m rows cover every partition once so none is empty.
    const std::size_t p = i < m ? i : pick_part(rng);
    for (std::size_t b = 0; b < cfg.n_B; ++b) {
      const auto cw = pq.codeword(b, static_cast<std::size_t>(pick_code(rng)));
      std::copy(cw.begin(), cw.end(), w.begin() + static_cast<std::ptrdiff_t>(offsets[b]));
    }
    rot.apply(w, rw);
    const double lambda = scaled ? sq.levels[pick_level(rng)] : 1.0;
    const double t = lod ? decode_uq(uq, pick_uq(rng)) : 0.0;
    auto x = inst.data.row(i);
    for (std::size_t k = 0; k < dim; ++k) {
      x[k] = static_cast<float>(coarse.centers[p * dim + k] + lambda * rw[k] + t * dirs[p][k]);
    }
  }

  BuildOptions& opt = inst.options;
  opt.overrides.coarse = coarse;
  opt.overrides.quantizer = std::make_pair(rot, pq);
  if (lod) {
    opt.overrides.directions = dirs;
    opt.overrides.uq = std::vector<UQParams>(m, uq);
  }
  if (scaled) opt.overrides.sq = std::vector<SQCodebook>(m, sq);
  return inst;
}

}  // namespace lodmsq
