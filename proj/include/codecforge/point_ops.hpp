#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "codecforge/tensor.hpp"

namespace codecforge {

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> coords;
  std::vector<Point3> colors;        // empty when the cloud carries no color
  std::vector<std::size_t> labels;   // empty when unlabeled
  std::size_t num_classes = 0;

  std::size_t size() const { return coords.size(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_labels() const { return !labels.empty(); }

  // Throws InputError on empty clouds, non-finite coordinates, arity
  // mismatches, or labels outside [0, num_classes).
  void validate() const;

  // n×3 (xyz) or n×6 (xyz + rgb) input features.
  Tensor features(std::size_t input_dim) const;

  PointCloud subset(std::span<const std::size_t> idx) const;
};

struct KnnTable {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // row-major, one row of k per query

  std::size_t rows() const { return k ? indices.size() / k : 0; }
  std::span<const std::size_t> row(std::size_t q) const {
    return std::span<const std::size_t>(indices).subspan(q * k, k);
  }
};

// ceil(n / ratio) distinct indices drawn uniformly without replacement,
// sorted ascending.
std::vector<std::size_t> random_subsample(std::size_t n, std::size_t ratio, std::uint64_t seed);

// K nearest reference points per query by Euclidean distance, ascending,
// ties broken by lower index. Rows are padded with the nearest point when the
// reference set has fewer than K points. Uses a uniform grid internally.
KnnTable knn(std::span<const Point3> query, std::span<const Point3> reference, std::size_t k);

inline constexpr std::size_t kDefaultNeighbors = 16;
inline const std::vector<std::size_t> kDefaultRatios{4, 4, 4, 4, 2};

struct HierarchyRow {
  std::vector<std::size_t> subset;  // indices into the previous row (row -1 is the full cloud)
  std::vector<std::size_t> origin;  // indices into the full-resolution cloud
  std::vector<Point3> coords;
  KnnTable knn;                     // within this row
  std::vector<std::size_t> up_nn;   // per point of the previous row: nearest point of this row
};

// Nested random subsets of a cloud. Row i keeps ceil(|row i-1| / ratios[i])
// points; row -1 denotes the full-resolution cloud.
struct SamplingHierarchy {
  std::vector<std::size_t> ratios;
  std::size_t k = 0;
  std::size_t full_size = 0;
  std::vector<HierarchyRow> rows;

  std::size_t depth() const { return rows.size(); }
  std::size_t row_size(int row) const;

  // Block-diagonal union of independent hierarchies (one per batch sample);
  // no index crosses sample boundaries.
  static SamplingHierarchy concatenate(std::span<const SamplingHierarchy> parts);
};

SamplingHierarchy build_hierarchy(std::span<const Point3> coords, std::span<const std::size_t> ratios,
                                  std::size_t k, std::uint64_t seed);
SamplingHierarchy build_hierarchy(const PointCloud& cloud, std::span<const std::size_t> ratios,
                                  std::size_t k, std::uint64_t seed);

// Features at row to_row + 1 copied onto every point of to_row via up_nn.
Tensor upsample_nearest(const Tensor& features, const SamplingHierarchy& hier, int to_row);

// Features at row to_row - 1 gathered at the surviving subset of to_row.
Tensor downsample_gather(const Tensor& features, const SamplingHierarchy& hier, int to_row);

// Labels of the points that survive into `row` (exact: subsets are nested).
std::vector<std::size_t> propagate_labels(std::span<const std::size_t> labels,
                                          const SamplingHierarchy& hier, int row);

}  // namespace codecforge
