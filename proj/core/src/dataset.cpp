#include "lodmsq/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <string>

#include "lodmsq/error.hpp"
#include "lodmsq/kernels.hpp"
#include "lodmsq/parallel.hpp"

namespace lodmsq {

Dataset::Dataset(std::size_t dim, std::vector<float> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ == 0 && !values_.empty()) throw InvalidArgument("dataset dimension must be positive");
  if (dim_ != 0 && values_.size() % dim_ != 0) {
    throw InvalidArgument("value count " + std::to_string(values_.size()) +
                          " is not a multiple of dim " + std::to_string(dim_));
  }
}

Dataset::Dataset(std::size_t rows, std::size_t dim) : dim_(dim), values_(rows * dim, 0.0f) {}

Dataset Dataset::subset(std::span<const std::uint32_t> ids) const {
  Dataset out(ids.size(), dim_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= size()) throw InvalidArgument("subset id out of range");
    std::copy_n(row(ids[i]).data(), dim_, out.row(i).data());
  }
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T from_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
T to_le(T v) {
  return from_le(v);
}

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

// Parses variable-length records of 4-byte payload items.
template <typename T>
std::vector<std::vector<T>> parse_records(const std::vector<char>& bytes,
                                          const std::filesystem::path& path) {
  static_assert(sizeof(T) == 4);
  std::vector<std::vector<T>> rows;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 4) {
      throw FormatError(path.string() + ": truncated record header at byte " + std::to_string(pos));
    }
    std::int32_t d;
    std::memcpy(&d, bytes.data() + pos, 4);
    d = from_le(d);
    pos += 4;
    if (d <= 0) {
      throw FormatError(path.string() + ": invalid record dimension " + std::to_string(d));
    }
    const std::size_t need = static_cast<std::size_t>(d) * 4;
    if (bytes.size() - pos < need) {
      throw FormatError(path.string() + ": truncated record payload at byte " + std::to_string(pos));
    }
    std::vector<T> row(static_cast<std::size_t>(d));
    std::memcpy(row.data(), bytes.data() + pos, need);
    for (auto& v : row) v = from_le(v);
    pos += need;
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
void write_records(const std::vector<std::vector<T>>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& row : rows) {
    if (row.empty()) throw InvalidArgument("cannot write an empty record");
    const std::int32_t d = to_le(static_cast<std::int32_t>(row.size()));
    out.write(reinterpret_cast<const char*>(&d), 4);
    for (T v : row) {
      v = to_le(v);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

Dataset load_fvecs(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const auto rows = parse_records<float>(bytes, path);
  if (rows.empty()) throw FormatError(path.string() + ": no records");
  const std::size_t dim = rows.front().size();
  std::vector<float> values;
  values.reserve(rows.size() * dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      throw FormatError(path.string() + ": dimension mismatch at record " + std::to_string(i) +
                        " (" + std::to_string(rows[i].size()) + " vs " + std::to_string(dim) + ")");
    }
    for (float v : rows[i]) {
      if (!std::isfinite(v)) {
        throw FormatError(path.string() + ": non-finite value in record " + std::to_string(i));
      }
    }
    values.insert(values.end(), rows[i].begin(), rows[i].end());
  }
  return Dataset(dim, std::move(values));
}

void save_fvecs(const Dataset& data, const std::filesystem::path& path) {
  if (data.empty()) throw InvalidArgument("cannot save an empty dataset");
  std::vector<std::vector<float>> rows(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    rows[i].assign(data.row(i).begin(), data.row(i).end());
  }
  write_records(rows, path);
}

std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path) {
  return parse_records<std::int32_t>(read_all(path), path);
}

void save_ivecs(const std::vector<std::vector<std::int32_t>>& rows,
                const std::filesystem::path& path) {
  write_records(rows, path);
}

std::vector<std::vector<float>> load_fvecs_rows(const std::filesystem::path& path) {
  return parse_records<float>(read_all(path), path);
}

void save_fvecs_rows(const std::vector<std::vector<float>>& rows,
                     const std::filesystem::path& path) {
  write_records(rows, path);
}

Dataset l2_normalize(const Dataset& data) {
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto r = out.row(i);
    const double n = std::sqrt(dot_exact(r, r));
    if (n == 0.0) throw InvalidArgument("zero-norm row " + std::to_string(i));
    for (auto& v : r) v = static_cast<float>(v / n);
  }
  return out;
}

std::vector<Neighbor> brute_force_topk(const Dataset& data, std::span<const float> query,
                                       std::size_t k) {
  if (query.size() != data.dim()) {
    throw InvalidArgument("query dim " + std::to_string(query.size()) + " != dataset dim " +
                          std::to_string(data.dim()));
  }
  if (k == 0 || k > data.size()) {
    throw InvalidArgument("k=" + std::to_string(k) + " must be in [1, N=" +
                          std::to_string(data.size()) + "]");
  }
  // Max-heap ordered so the worst kept candidate sits at the top.
  auto worse = [](const Neighbor& a, const Neighbor& b) { return ranks_before(a, b); };
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(worse);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Neighbor cand{static_cast<std::uint32_t>(i), dot_exact(data.row(i), query)};
    if (heap.size() < k) {
      heap.push(cand);
    } else if (ranks_before(cand, heap.top())) {
      heap.pop();
      heap.push(cand);
    }
  }
  std::vector<Neighbor> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

GroundTruth brute_force_ground_truth(const Dataset& data, const Dataset& queries, std::size_t k,
                                     int threads) {
  GroundTruth gt(queries.size());
  parallel_for(queries.size(), threads,
               [&](std::size_t q) { gt[q] = brute_force_topk(data, queries.row(q), k); });
  return gt;
}

std::uint64_t dataset_hash(const Dataset& data, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t dim = data.dim();
  feed(&dim, sizeof dim);
  feed(data.values().data(), data.values().size() * sizeof(float));
  return h;
}

}  // namespace lodmsq
