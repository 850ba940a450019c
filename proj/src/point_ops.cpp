#include "codecforge/point_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "codecforge/errors.hpp"
#include "codecforge/parallel.hpp"

namespace codecforge {

// ---- PointCloud --------------------------------------------------------------

void PointCloud::validate() const {
  if (coords.empty()) throw InputError("point cloud is empty");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (const double v : coords[i]) {
      if (!std::isfinite(v)) throw InputError("non-finite coordinate at point " + std::to_string(i));
    }
  }
  if (has_colors() && colors.size() != coords.size()) {
    throw InputError("cloud has " + std::to_string(coords.size()) + " points but " +
                     std::to_string(colors.size()) + " colors");
  }
  if (has_labels()) {
    if (labels.size() != coords.size()) {
      throw InputError("cloud has " + std::to_string(coords.size()) + " points but " +
                       std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= num_classes) {
        throw InputError("label " + std::to_string(labels[i]) + " at point " + std::to_string(i) +
                         " exceeds class count " + std::to_string(num_classes));
      }
    }
  }
}

Tensor PointCloud::features(std::size_t input_dim) const {
  if (input_dim != 3 && input_dim != 6) {
    throw ConfigError("input feature width must be 3 or 6, got " + std::to_string(input_dim));
  }
  if (input_dim == 6 && !has_colors()) throw InputError("xyz+rgb features requested on a colorless cloud");
  std::vector<double> values;
  values.reserve(size() * input_dim);
  for (std::size_t i = 0; i < size(); ++i) {
    values.insert(values.end(), coords[i].begin(), coords[i].end());
    if (input_dim == 6) values.insert(values.end(), colors[i].begin(), colors[i].end());
  }
  return Tensor({size(), input_dim}, std::move(values));
}

PointCloud PointCloud::subset(std::span<const std::size_t> idx) const {
  PointCloud out;
  out.num_classes = num_classes;
  for (const std::size_t i : idx) {
    out.coords.push_back(coords.at(i));
    if (has_colors()) out.colors.push_back(colors.at(i));
    if (has_labels()) out.labels.push_back(labels.at(i));
  }
  return out;
}

// ---- sampling ----------------------------------------------------------------

std::vector<std::size_t> random_subsample(std::size_t n, std::size_t ratio, std::uint64_t seed) {
  if (ratio < 1) throw ConfigError("sampling ratio must be >= 1");
  if (n < 1) throw InputError("cannot subsample an empty set");
  const std::size_t keep = (n + ratio - 1) / ratio;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (keep == n) return idx;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `keep` slots become a uniform sample.
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---- KNN ---------------------------------------------------------------------

namespace {

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

class UniformGrid {
 public:
  explicit UniformGrid(std::span<const Point3> points) : points_(points) {
    lo_ = hi_ = points[0];
    for (const Point3& p : points)
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], p[a]);
        hi_[a] = std::max(hi_[a], p[a]);
      }
    double extent = 0.0;
    for (int a = 0; a < 3; ++a) extent = std::max(extent, hi_[a] - lo_[a]);
    // Roughly two points per occupied cell for surface-like clouds.
    const double per_axis = std::max(1.0, std::ceil(std::sqrt(static_cast<double>(points.size()) / 2.0)));
    cell_ = extent > 0.0 ? extent / per_axis : 1.0;
    for (int a = 0; a < 3; ++a) {
      dims_[a] = static_cast<long>(std::floor((hi_[a] - lo_[a]) / cell_)) + 1;
    }
    cell_start_.assign(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]) + 1, 0);
    std::vector<std::size_t> cell_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      cell_of[i] = flat(cell_coord(points[i]));
      ++cell_start_[cell_of[i] + 1];
    }
    std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
    members_.resize(points.size());
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) members_[fill[cell_of[i]]++] = i;
  }

  // Exact K smallest (distance, index) pairs, matching an exhaustive scan.
  void query(const Point3& q, std::size_t k, std::vector<std::pair<double, std::size_t>>& best) const {
    best.clear();
    const std::array<long, 3> center = cell_coord(q);
    const long max_ring = std::max({dims_[0], dims_[1], dims_[2]}) +
                          std::max({std::labs(center[0]), std::labs(center[1]), std::labs(center[2])});
    for (long ring = 0; ring <= max_ring; ++ring) {
      visit_ring(center, ring, [&](std::size_t idx) {
        const std::pair<double, std::size_t> cand{squared_distance(q, points_[idx]), idx};
        if (best.size() < k) {
          best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
        } else if (cand < best.back()) {
          best.pop_back();
          best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
        }
      });
      if (best.size() == k || best.size() == points_.size()) {
        if (best.size() == points_.size()) return;
        const double bound = unvisited_lower_bound(q, center, ring);
        if (bound > 0.0 && bound * bound > best.back().first) return;
      }
    }
  }

 private:
  std::array<long, 3> cell_coord(const Point3& p) const {
    std::array<long, 3> c{};
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp(static_cast<long>(std::floor((p[a] - lo_[a]) / cell_)), 0L, dims_[a] - 1);
    }
    return c;
  }

  std::size_t flat(const std::array<long, 3>& c) const {
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  }

  // Every point outside the cube of cells within `ring` of `center` is at
  // least this far from q. A small slack absorbs rounding in cell assignment.
  double unvisited_lower_bound(const Point3& q, const std::array<long, 3>& center, long ring) const {
    double bound = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const long lo_cell = center[a] - ring, hi_cell = center[a] + ring;
      if (lo_cell > 0) bound = std::min(bound, q[a] - (lo_[a] + static_cast<double>(lo_cell) * cell_));
      if (hi_cell < dims_[a] - 1)
        bound = std::min(bound, (lo_[a] + static_cast<double>(hi_cell + 1) * cell_) - q[a]);
    }
    return bound - 1e-9 * (cell_ + 1.0);
  }

  template <typename Fn>
  void visit_ring(const std::array<long, 3>& c, long ring, Fn&& fn) const {
    const long x0 = std::max(0L, c[0] - ring), x1 = std::min(dims_[0] - 1, c[0] + ring);
    const long y0 = std::max(0L, c[1] - ring), y1 = std::min(dims_[1] - 1, c[1] + ring);
    const long z0 = std::max(0L, c[2] - ring), z1 = std::min(dims_[2] - 1, c[2] + ring);
    for (long x = x0; x <= x1; ++x)
      for (long y = y0; y <= y1; ++y)
        for (long z = z0; z <= z1; ++z) {
          const long cheb = std::max({std::labs(x - c[0]), std::labs(y - c[1]), std::labs(z - c[2])});
          if (cheb != ring) continue;
          const std::size_t f = flat({x, y, z});
          for (std::size_t m = cell_start_[f]; m < cell_start_[f + 1]; ++m) fn(members_[m]);
        }
  }

  std::span<const Point3> points_;
  Point3 lo_{}, hi_{};
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> members_;
};

}  // namespace

KnnTable knn(std::span<const Point3> query, std::span<const Point3> reference, std::size_t k) {
  if (reference.empty()) throw InputError("knn: empty reference set");
  if (k < 1) throw ConfigError("knn: K must be >= 1");
  const UniformGrid grid(reference);
  KnnTable table;
  table.k = k;
  table.indices.resize(query.size() * k);
  parallel_for(query.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::size_t>> best;
    for (std::size_t q = begin; q < end; ++q) {
      grid.query(query[q], k, best);
      std::size_t* out = table.indices.data() + q * k;
      for (std::size_t j = 0; j < k; ++j) out[j] = j < best.size() ? best[j].second : best[0].second;
    }
  });
  return table;
}

// ---- hierarchy ---------------------------------------------------------------

std::size_t SamplingHierarchy::row_size(int row) const {
  if (row < -1 || row >= static_cast<int>(rows.size())) {
    throw IndexError("hierarchy row " + std::to_string(row) + " out of range [-1, " +
                     std::to_string(rows.size()) + ")");
  }
  return row < 0 ? full_size : rows[static_cast<std::size_t>(row)].coords.size();
}

SamplingHierarchy SamplingHierarchy::concatenate(std::span<const SamplingHierarchy> parts) {
  if (parts.empty()) throw InputError("cannot concatenate zero hierarchies");
  SamplingHierarchy out;
  out.ratios = parts[0].ratios;
  out.k = parts[0].k;
  out.rows.resize(parts[0].depth());
  for (const SamplingHierarchy& p : parts) {
    if (p.depth() != out.depth() || p.k != out.k) {
      throw InputError("hierarchies with different depth or K cannot be batched");
    }
  }
  std::size_t full_offset = 0;
  std::vector<std::size_t> row_offset(out.depth(), 0);
  for (const SamplingHierarchy& p : parts) {
    std::size_t prev_offset = full_offset;
    for (std::size_t r = 0; r < out.depth(); ++r) {
      const HierarchyRow& src = p.rows[r];
      HierarchyRow& dst = out.rows[r];
      for (const std::size_t s : src.subset) dst.subset.push_back(s + prev_offset);
      for (const std::size_t o : src.origin) dst.origin.push_back(o + full_offset);
      dst.coords.insert(dst.coords.end(), src.coords.begin(), src.coords.end());
      dst.knn.k = src.knn.k;
      for (const std::size_t i : src.knn.indices) dst.knn.indices.push_back(i + row_offset[r]);
      for (const std::size_t u : src.up_nn) dst.up_nn.push_back(u + row_offset[r]);
      prev_offset = row_offset[r];
      row_offset[r] += src.coords.size();
    }
    full_offset += p.full_size;
  }
  out.full_size = full_offset;
  return out;
}

SamplingHierarchy build_hierarchy(std::span<const Point3> coords, std::span<const std::size_t> ratios,
                                  std::size_t k, std::uint64_t seed) {
  if (coords.empty()) throw InputError("cannot build a hierarchy over an empty cloud");
  std::size_t product = 1;
  for (const std::size_t r : ratios) {
    if (r < 1) throw ConfigError("sampling ratios must be >= 1");
    product *= r;
  }
  if (coords.size() < product) {
    throw InputError("cloud of " + std::to_string(coords.size()) +
                     " points is smaller than the ratio product " + std::to_string(product) +
                     "; the deepest row would be empty");
  }
  SamplingHierarchy hier;
  hier.ratios.assign(ratios.begin(), ratios.end());
  hier.k = k;
  hier.full_size = coords.size();
  std::mt19937_64 rng(seed);
  std::span<const Point3> prev_coords = coords;
  std::vector<std::size_t> prev_origin(coords.size());
  std::iota(prev_origin.begin(), prev_origin.end(), 0);
  for (const std::size_t ratio : ratios) {
    HierarchyRow row;
    row.subset = random_subsample(prev_coords.size(), ratio, rng());
    for (const std::size_t s : row.subset) {
      row.origin.push_back(prev_origin[s]);
      row.coords.push_back(prev_coords[s]);
    }
    row.knn = knn(row.coords, row.coords, k);
    const KnnTable nearest = knn(prev_coords, row.coords, 1);
    row.up_nn = nearest.indices;
    hier.rows.push_back(std::move(row));
    prev_coords = hier.rows.back().coords;
    prev_origin = hier.rows.back().origin;
  }
  return hier;
}

SamplingHierarchy build_hierarchy(const PointCloud& cloud, std::span<const std::size_t> ratios,
                                  std::size_t k, std::uint64_t seed) {
  return build_hierarchy(std::span<const Point3>(cloud.coords), ratios, k, seed);
}

Tensor upsample_nearest(const Tensor& features, const SamplingHierarchy& hier, int to_row) {
  const int from_row = to_row + 1;
  const std::size_t expected = hier.row_size(from_row);
  if (features.rank() == 0 || features.dim(0) != expected) {
    throw DimensionError("upsample_nearest: features " + shape_string(features.shape()) +
                         " do not match the " + std::to_string(expected) + " points of row " +
                         std::to_string(from_row));
  }
  return gather_rows(features, hier.rows[static_cast<std::size_t>(from_row)].up_nn);
}

Tensor downsample_gather(const Tensor& features, const SamplingHierarchy& hier, int to_row) {
  const std::size_t expected = hier.row_size(to_row - 1);
  if (to_row < 0) throw IndexError("downsample_gather: target row must be >= 0");
  if (features.rank() == 0 || features.dim(0) != expected) {
    throw DimensionError("downsample_gather: features " + shape_string(features.shape()) +
                         " do not match the " + std::to_string(expected) + " points of row " +
                         std::to_string(to_row - 1));
  }
  return gather_rows(features, hier.rows[static_cast<std::size_t>(to_row)].subset);
}

std::vector<std::size_t> propagate_labels(std::span<const std::size_t> labels,
                                          const SamplingHierarchy& hier, int row) {
  if (labels.empty()) throw InputError("propagate_labels: cloud carries no labels");
  if (labels.size() != hier.full_size) {
    throw DimensionError("propagate_labels: " + std::to_string(labels.size()) + " labels for a " +
                         std::to_string(hier.full_size) + "-point hierarchy");
  }
  if (row < 0) return {labels.begin(), labels.end()};
  hier.row_size(row);
  std::vector<std::size_t> out;
  for (const std::size_t o : hier.rows[static_cast<std::size_t>(row)].origin) out.push_back(labels[o]);
  return out;
}

}  // namespace codecforge
