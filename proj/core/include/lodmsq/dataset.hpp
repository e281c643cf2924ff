#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lodmsq {

/// Dense row-major float32 matrix; row ids are the implicit 0-based indices.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t dim, std::vector<float> values);
  Dataset(std::size_t rows, std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const { return values_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<float> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& values() { return values_; }

  /// Copy of the rows at `ids`, in that order.
  Dataset subset(std::span<const std::uint32_t> ids) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

struct Neighbor {
  std::uint32_t id = 0;
  double score = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Ranks a before b: higher score first, then smaller id.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

/// Per query, (id, exact inner product) sorted descending.
using GroundTruth = std::vector<std::vector<Neighbor>>;

// fvecs / ivecs: repeated records [int32 d (LE)][d payload items (LE)].
Dataset load_fvecs(const std::filesystem::path& path);
void save_fvecs(const Dataset& data, const std::filesystem::path& path);
std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path);
void save_ivecs(const std::vector<std::vector<std::int32_t>>& rows,
                const std::filesystem::path& path);
/// Variable-length float rows (e.g. ground-truth scores); every row non-empty.
std::vector<std::vector<float>> load_fvecs_rows(const std::filesystem::path& path);
void save_fvecs_rows(const std::vector<std::vector<float>>& rows,
                     const std::filesystem::path& path);

Dataset l2_normalize(const Dataset& data);

/// Exact top-k by inner product; ties broken by smaller id.
std::vector<Neighbor> brute_force_topk(const Dataset& data, std::span<const float> query,
                                       std::size_t k);

/// brute_force_topk for every query; output order equals query order.
GroundTruth brute_force_ground_truth(const Dataset& data, const Dataset& queries,
                                     std::size_t k, int threads = 1);

/// FNV-1a 64 over dim and raw float bytes; used as a cache key.
std::uint64_t dataset_hash(const Dataset& data, std::uint64_t seed = 0);

}  // namespace lodmsq
