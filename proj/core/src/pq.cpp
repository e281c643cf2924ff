#include "lodmsq/pq.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/kernels.hpp"

namespace lodmsq {

int PQCodebook::code_bits() const {
  int bits = 0;
  while ((std::size_t{1} << bits) < n_W) ++bits;
  return bits;
}

std::vector<std::size_t> subspace_offsets(std::size_t dim, std::size_t n_B) {
  if (n_B == 0) throw InvalidArgument("n_B must be positive");
  if (n_B > dim) {
    throw InvalidArgument("n_B=" + std::to_string(n_B) + " exceeds dimension " +
                          std::to_string(dim));
  }
  const std::size_t base = dim / n_B;
  std::vector<std::size_t> off(n_B + 1);
  for (std::size_t b = 0; b < n_B; ++b) off[b] = b * base;
  off[n_B] = dim;
  return off;
}

Dataset slice_columns(const Dataset& data, std::size_t begin, std::size_t end) {
  const std::size_t w = end - begin;
  Dataset out(data.size(), w);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::copy_n(data.row(i).data() + begin, w, out.row(i).data());
  }
  return out;
}

PQCodebook train_pq(const Dataset& data, std::size_t n_B, std::size_t n_W, int max_iters,
                    std::uint64_t seed, int threads) {
  if (n_W < 2 || n_W > 256) throw InvalidArgument("n_W must be in [2, 256]");
  if (n_W > data.size()) {
    throw InvalidArgument("n_W=" + std::to_string(n_W) + " exceeds N=" +
                          std::to_string(data.size()));
  }
  PQCodebook cb;
  cb.dim = data.dim();
  cb.n_B = n_B;
  cb.n_W = n_W;
  cb.offsets = subspace_offsets(data.dim(), n_B);
  cb.codebooks.resize(n_B);
  for (std::size_t b = 0; b < n_B; ++b) {
    const Dataset sub = slice_columns(data, cb.offsets[b], cb.offsets[b + 1]);
    cb.codebooks[b] = train_vq(sub, n_W, max_iters, seed, threads).centers;
  }
  return cb;
}

void encode_pq_into(const PQCodebook& cb, std::span<const float> x, std::span<PQCode> codes) {
  if (x.size() != cb.dim) {
    throw InvalidArgument("encode_pq: dim " + std::to_string(x.size()) + " != " +
                          std::to_string(cb.dim));
  }
  for (std::size_t b = 0; b < cb.n_B; ++b) {
    const std::size_t w = cb.sub_dim(b);
    const float* xs = x.data() + cb.offsets[b];
    const float* words = cb.codebooks[b].data();
    float best = std::numeric_limits<float>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < cb.n_W; ++j) {
      const float d = l2_sq(xs, words + j * w, w);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    codes[b] = static_cast<PQCode>(arg);
  }
}

std::vector<PQCode> encode_pq(const PQCodebook& cb, std::span<const float> x) {
  std::vector<PQCode> codes(cb.n_B);
  encode_pq_into(cb, x, codes);
  return codes;
}

void reconstruct_pq_into(const PQCodebook& cb, std::span<const PQCode> codes,
                         std::span<float> out) {
  if (codes.size() != cb.n_B) throw InvalidArgument("reconstruct_pq: wrong code count");
  for (std::size_t b = 0; b < cb.n_B; ++b) {
    if (codes[b] >= cb.n_W) throw InvalidArgument("reconstruct_pq: code out of range");
    const auto w = cb.codeword(b, codes[b]);
    std::copy(w.begin(), w.end(), out.begin() + static_cast<std::ptrdiff_t>(cb.offsets[b]));
  }
}

std::vector<float> reconstruct_pq(const PQCodebook& cb, std::span<const PQCode> codes) {
  std::vector<float> out(cb.dim);
  reconstruct_pq_into(cb, codes, out);
  return out;
}

}  // namespace lodmsq
