#include "lodmsq/index.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/kernels.hpp"
#include "lodmsq/lod.hpp"
#include "lodmsq/parallel.hpp"
#include "lodmsq/random.hpp"

namespace lodmsq {

std::string_view kind_name(IndexKind kind) {
  switch (kind) {
    case IndexKind::kMipsPq: return "MIPS_PQ";
    case IndexKind::kMipsOpq: return "MIPS_OPQ";
    case IndexKind::kL2Opq: return "L2_OPQ";
    case IndexKind::kMipsMsq: return "MIPS_MSQ";
    case IndexKind::kMipsLodOpq: return "MIPS_LOD_OPQ";
    case IndexKind::kMipsLodMsq: return "MIPS_LOD_MSQ";
  }
  return "UNKNOWN";
}

IndexKind parse_kind(std::string_view name) {
  std::string s;
  for (char c : name) s.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (s.rfind("MIPS_", 0) == 0) s = s.substr(5);
  if (s == "PQ") return IndexKind::kMipsPq;
  if (s == "OPQ") return IndexKind::kMipsOpq;
  if (s == "L2_OPQ") return IndexKind::kL2Opq;
  if (s == "MSQ") return IndexKind::kMipsMsq;
  if (s == "LOD_OPQ") return IndexKind::kMipsLodOpq;
  if (s == "LOD_MSQ") return IndexKind::kMipsLodMsq;
  throw InvalidArgument("unknown index kind '" + std::string(name) +
                        "' (expected one of MIPS_PQ, MIPS_OPQ, L2_OPQ, MIPS_MSQ, MIPS_LOD_OPQ, "
                        "MIPS_LOD_MSQ)");
}

void validate_config(const IndexConfig& c, IndexKind kind, std::size_t dim) {
  if (c.m < 1) throw InvalidArgument("m must be >= 1");
  if (c.n_B < 1 || c.n_B > dim) {
    throw InvalidArgument("n_B=" + std::to_string(c.n_B) + " must be in [1, d=" +
                          std::to_string(dim) + "]");
  }
  if (c.n_W < 2 || c.n_W > 256) throw InvalidArgument("n_W must be in [2, 256]");
  if (uses_lod(kind) && (c.l_UQ < 1 || c.l_UQ > 16)) {
    throw InvalidArgument("l_UQ must be in [1, 16]");
  }
  if (uses_scale(kind) && (c.l_SQ < 0 || c.l_SQ > 8)) {
    throw InvalidArgument("l_SQ must be in [0, 8]");
  }
}

EntryBits entry_bits(const IndexConfig& c, IndexKind kind) {
  int code_bits = 0;
  while ((std::size_t{1} << code_bits) < c.n_W) ++code_bits;
  EntryBits b;
  b.payload = static_cast<int>(c.n_B) * code_bits + (uses_lod(kind) ? c.l_UQ : 0);
  b.scale = uses_scale(kind) ? c.l_SQ : 0;
  return b;
}

std::size_t Index::total_entries() const {
  std::size_t n = 0;
  for (const auto& p : partitions) n += p.size();
  return n;
}

VQCodebook Index::centers() const {
  VQCodebook cb{dim, {}};
  cb.centers.reserve(partitions.size() * dim);
  for (const auto& p : partitions) cb.centers.insert(cb.centers.end(), p.center.begin(), p.center.end());
  return cb;
}

namespace {

// R y in double precision.
void rotate_forward(const Rotation& r, std::span<const float> y, std::span<double> out) {
  const std::size_t d = r.dim;
  for (std::size_t i = 0; i < d; ++i) {
    const float* row = r.matrix.data() + i * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(row[j]) * y[j];
    out[i] = s;
  }
}

using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row e is R phi_PQ(codes_e), in double precision.
RowMatD rotate_reconstructions(const RowMatD& rot, const PQCodebook& pq,
                               const std::vector<PQCode>& codes, std::size_t cnt) {
  const auto d = static_cast<Eigen::Index>(pq.dim);
  RowMatD y(static_cast<Eigen::Index>(cnt), d);
  std::vector<float> rec(pq.dim);
  for (std::size_t e = 0; e < cnt; ++e) {
    reconstruct_pq_into(pq, std::span<const PQCode>(codes.data() + e * pq.n_B, pq.n_B), rec);
    for (Eigen::Index k = 0; k < d; ++k) y(static_cast<Eigen::Index>(e), k) = rec[static_cast<std::size_t>(k)];
  }
  return y * rot.transpose();
}

std::vector<std::vector<float>> choose_directions(IndexKind kind, const VQCodebook& coarse,
                                                  const BuildOptions& opt, BuildReport& rep) {
  const std::size_t m = coarse.count();
  std::vector<std::vector<float>> dirs(m);
  if (!uses_lod(kind)) return dirs;
  if (opt.overrides.directions) {
    dirs = *opt.overrides.directions;
    if (dirs.size() != m) throw InvalidArgument("direction override count != m");
    for (const auto& v : dirs) {
      if (v.size() != coarse.dim) throw InvalidArgument("direction override has wrong dim");
    }
    return dirs;
  }
  std::vector<std::vector<std::uint32_t>> query_members(m);
  if (opt.proj_dir == ProjDirMode::kQueryPca) {
    if (opt.pca_queries == nullptr) throw InvalidArgument("query_pca mode needs training queries");
    const Dataset& qs = *opt.pca_queries;
    if (qs.dim() != coarse.dim) throw InvalidArgument("training query dim != data dim");
    for (std::size_t i = 0; i < qs.size(); ++i) {
      std::size_t best = 0;
      double bv = dot(qs.row(i).data(), coarse.center(0).data(), coarse.dim);
      for (std::size_t j = 1; j < m; ++j) {
        const double v = dot(qs.row(i).data(), coarse.center(j).data(), coarse.dim);
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      query_members[best].push_back(static_cast<std::uint32_t>(i));
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (opt.proj_dir == ProjDirMode::kQueryPca && query_members[j].size() >= 2) {
      try {
        dirs[j] = proj_dir_query_pca(opt.pca_queries->subset(query_members[j]));
        continue;
      } catch (const InvalidArgument&) {
        // zero moment matrix: fall through to the center direction
      }
    }
    if (opt.proj_dir == ProjDirMode::kQueryPca) ++rep.pca_fallbacks;
    dirs[j] = proj_dir_center(coarse.center(j));
  }
  return dirs;
}

std::vector<std::uint32_t> training_rows(const std::vector<double>& comp_norm, bool need_nonzero,
                                         std::size_t n_W, std::size_t sample,
                                         std::uint64_t seed) {
  std::vector<std::uint32_t> rows;
  for (std::size_t i = 0; i < comp_norm.size(); ++i) {
    if (!need_nonzero || comp_norm[i] > 0.0) rows.push_back(static_cast<std::uint32_t>(i));
  }
  if (rows.size() < n_W) {
    rows.resize(comp_norm.size());
    std::iota(rows.begin(), rows.end(), 0u);
  }
  if (sample > 0 && rows.size() > sample && sample >= n_W) {
    Rng rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(sample);
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

}  // namespace

Index build_ivf_index(IndexKind kind, const Dataset& data, const IndexConfig& config,
                      const BuildOptions& opt, std::uint64_t seed, BuildReport* report) {
  const std::size_t d = data.dim();
  const std::size_t n = data.size();
  validate_config(config, kind, d);
  if (config.m > n) {
    throw InvalidArgument("m=" + std::to_string(config.m) + " exceeds N=" + std::to_string(n));
  }
  if (config.n_W > n) {
    throw InvalidArgument("n_W=" + std::to_string(config.n_W) + " exceeds N=" + std::to_string(n));
  }
  const bool lod = uses_lod(kind);
  const bool scaled = uses_scale(kind);
  BuildReport local;
  BuildReport& rep = report ? *report : local;
  rep = BuildReport{};

  // Coarse partitioning.
  VQCodebook coarse = opt.overrides.coarse
                          ? *opt.overrides.coarse
                          : train_vq(data, config.m, opt.vq_iters, stream_seed(seed, 1), opt.threads);
  if (coarse.count() != config.m || coarse.dim != d) {
    throw InvalidArgument("coarse codebook does not match m / dim");
  }
  const auto assign = assign_all(coarse, data, opt.threads);
  const auto dirs = choose_directions(kind, coarse, opt, rep);

  // Components handed to the residual quantizer: o_hat (scaled kinds) or o.
  Dataset comp(n, d);
  std::vector<double> comp_norm(n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    const auto x = data.row(i);
    const auto c = coarse.center(assign[i]);
    std::vector<double> r(d);
    for (std::size_t k = 0; k < d; ++k) r[k] = static_cast<double>(x[k]) - c[k];
    if (lod) r = proj_orth(to_double(dirs[assign[i]]), r);
    const double nrm = std::sqrt(dot_d(r, r));
    comp_norm[i] = nrm;
    const double s = (scaled && nrm > 0.0) ? 1.0 / nrm : 1.0;
    auto out = comp.row(i);
    for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<float>(r[k] * s);
  });

  // Global residual quantizer.
  Rotation rotation;
  PQCodebook pq;
  if (opt.overrides.quantizer) {
    rotation = opt.overrides.quantizer->first;
    pq = opt.overrides.quantizer->second;
    if (rotation.dim != d || pq.dim != d || pq.n_B != config.n_B || pq.n_W != config.n_W) {
      throw InvalidArgument("quantizer override does not match config");
    }
  } else {
    const auto rows = training_rows(comp_norm, scaled, config.n_W, opt.train_sample,
                                    stream_seed(seed, 3));
    const Dataset train = comp.subset(rows);
    if (kind == IndexKind::kMipsPq) {
      rotation = Rotation::identity(d);
      pq = train_pq(train, config.n_B, config.n_W, opt.pq_iters, stream_seed(seed, 2), opt.threads);
    } else {
      OPQOptions o;
      o.n_B = config.n_B;
      o.n_W = config.n_W;
      o.outer_iters = opt.opq_iters;
      o.inner_iters = opt.pq_iters;
      o.refine_iters = opt.opq_refine_iters;
      o.seed = stream_seed(seed, 2);
      o.threads = opt.threads;
      auto res = train_opq(train, o);
      rotation = std::move(res.rotation);
      pq = std::move(res.pq);
      rep.opq_objective = std::move(res.objective);
      rep.svd_fallback = res.svd_fallback;
    }
  }

  const Dataset rotated = rotate_transpose(rotation, comp, opt.threads);
  const RowMatD rot_d = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                            rotation.matrix.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))
                            .cast<double>();
  std::vector<PQCode> codes(n * config.n_B, 0);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    if (scaled && comp_norm[i] == 0.0) return;  // zero code tuple
    encode_pq_into(pq, rotated.row(i), std::span<PQCode>(codes.data() + i * config.n_B, config.n_B));
  });

  Index index;
  index.kind = kind;
  index.config = config;
  index.dim = d;
  index.input_dim = d;
  index.seed = seed;
  index.rotation = rotation;
  index.pq = pq;
  index.partitions.resize(config.m);

  std::vector<std::vector<std::uint32_t>> members(config.m);
  for (std::size_t i = 0; i < n; ++i) members[assign[i]].push_back(static_cast<std::uint32_t>(i));

  if (opt.overrides.sq && opt.overrides.sq->size() != config.m) {
    throw InvalidArgument("SQ override count != m");
  }
  if (opt.overrides.uq && opt.overrides.uq->size() != config.m) {
    throw InvalidArgument("UQ override count != m");
  }

  rep.exact_lambda.assign(config.m, {});
  std::vector<std::size_t> zero_count(config.m, 0), degen_count(config.m, 0);

  parallel_for(config.m, opt.threads, [&](std::size_t pi) {
    Partition& part = index.partitions[pi];
    const auto& mem = members[pi];
    const std::size_t cnt = mem.size();
    part.center.assign(coarse.center(pi).begin(), coarse.center(pi).end());
    if (lod) part.direction = dirs[pi];
    part.ids = mem;
    part.pq_codes.resize(cnt * config.n_B);
    for (std::size_t e = 0; e < cnt; ++e) {
      std::copy_n(codes.data() + static_cast<std::size_t>(mem[e]) * config.n_B, config.n_B,
                  part.pq_codes.data() + e * config.n_B);
    }

    const std::vector<double> v = lod ? to_double(part.direction) : std::vector<double>{};
    // Rotated reconstructions R phi_PQ, one per entry.
    const bool need_rec = scaled || lod;
    std::vector<std::vector<double>> rot_rec(need_rec ? cnt : 0);
    if (need_rec && cnt > 0) {
      const auto rows = rotate_reconstructions(rot_d, pq, part.pq_codes, cnt);
      for (std::size_t e = 0; e < cnt; ++e) rot_rec[e].assign(rows.row(static_cast<Eigen::Index>(e)).begin(), rows.row(static_cast<Eigen::Index>(e)).end());
    }

    std::vector<double> levels(cnt, 1.0);
    if (scaled) {
      std::vector<double> lambda(cnt, 0.0);
      for (std::size_t e = 0; e < cnt; ++e) {
        const std::uint32_t row = mem[e];
        if (comp_norm[row] == 0.0) {
          ++zero_count[pi];
          continue;
        }
        double den;
        if (lod) {
          const auto orth = proj_orth(v, rot_rec[e]);
          den = std::sqrt(dot_d(orth, orth));
        } else {
          den = std::sqrt(dot_d(rot_rec[e], rot_rec[e]));
        }
        if (den == 0.0) {
          ++degen_count[pi];
          continue;
        }
        lambda[e] = comp_norm[row] / den;
      }
      if (opt.overrides.sq) {
        part.sq = (*opt.overrides.sq)[pi];
      } else if (cnt > 0) {
        part.sq = train_sq(lambda, config.l_SQ);
      } else {
        part.sq = SQCodebook{{0.0}};
      }
      part.sq_codes.resize(cnt);
      for (std::size_t e = 0; e < cnt; ++e) {
        const auto [code, level] = quantize_sq(part.sq, lambda[e]);
        part.sq_codes[e] = static_cast<std::uint8_t>(code);
        levels[e] = level;
      }
      rep.exact_lambda[pi] = std::move(lambda);
    }

    if (lod) {
      std::vector<double> z(cnt);
      std::vector<double> r(d), msq(d);
      const auto c = coarse.center(pi);
      for (std::size_t e = 0; e < cnt; ++e) {
        const auto x = data.row(mem[e]);
        for (std::size_t k = 0; k < d; ++k) {
          r[k] = static_cast<double>(x[k]) - c[k];
          msq[k] = levels[e] * rot_rec[e][k];
        }
        z[e] = compute_z(r, msq, v);
      }
      if (opt.overrides.uq) {
        part.uq = (*opt.overrides.uq)[pi];
        if (part.uq.bits != config.l_UQ) throw InvalidArgument("UQ override bit width != l_UQ");
      } else if (cnt > 0) {
        part.uq = train_uq(z, config.l_UQ, opt.clip);
      } else {
        part.uq = UQParams{1.0, 0.0, config.l_UQ};
      }
      part.uq_codes.resize(cnt);
      for (std::size_t e = 0; e < cnt; ++e) {
        part.uq_codes[e] = static_cast<std::int16_t>(encode_uq(part.uq, z[e]));
      }
    }
  });

  for (std::size_t pi = 0; pi < config.m; ++pi) {
    rep.zero_component += zero_count[pi];
    rep.degenerate_scale += degen_count[pi];
  }
  if (!scaled) {
    for (std::size_t i = 0; i < n; ++i) {
      if (comp_norm[i] == 0.0) ++rep.zero_component;
    }
  }
  return index;
}

Index build_index(const Dataset& data, const IndexConfig& config, const BuildOptions& options,
                  std::uint64_t seed, BuildReport* report) {
  return build_ivf_index(IndexKind::kMipsLodMsq, data, config, options, seed, report);
}

ModelOverrides overrides_from_index(const Index& index) {
  ModelOverrides o;
  o.coarse = index.centers();
  o.quantizer = std::make_pair(index.rotation, index.pq);
  if (uses_lod(index.kind)) {
    std::vector<std::vector<float>> dirs;
    std::vector<UQParams> uq;
    for (const auto& p : index.partitions) {
      dirs.push_back(p.direction);
      uq.push_back(p.uq);
    }
    o.directions = std::move(dirs);
    o.uq = std::move(uq);
  }
  if (uses_scale(index.kind)) {
    std::vector<SQCodebook> sq;
    for (const auto& p : index.partitions) sq.push_back(p.sq);
    o.sq = std::move(sq);
  }
  return o;
}

std::vector<double> msq_reconstruct(const Index& index, const Partition& p, std::size_t entry) {
  std::vector<float> y(index.dim);
  reconstruct_pq_into(index.pq, p.codes(entry, index.config.n_B), y);
  std::vector<double> out(index.dim);
  rotate_forward(index.rotation, y, out);
  if (uses_scale(index.kind)) {
    const double level = p.sq.levels.at(p.sq_codes.at(entry));
    for (auto& v : out) v *= level;
  }
  return out;
}

std::vector<double> reconstruct_residual(const Index& index, const Partition& p,
                                         std::size_t entry) {
  auto out = msq_reconstruct(index, p, entry);
  if (uses_lod(index.kind)) {
    const double zq = decode_uq(p.uq, p.uq_codes.at(entry));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += zq * p.direction[k];
  }
  return out;
}

}  // namespace lodmsq
