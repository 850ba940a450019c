#include "codecforge/scene.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "codecforge/errors.hpp"

namespace codecforge {

const std::array<std::string, kSceneClasses>& scene_class_names() {
  static const std::array<std::string, kSceneClasses> names{"floor",      "wall",   "box_furniture",
                                                            "thin_board", "column", "clutter"};
  return names;
}

namespace {

using Rng = std::mt19937_64;
using Sampler = std::function<Point3(Rng&)>;

constexpr std::array<Point3, kSceneClasses> kBaseColor{{
    {0.55, 0.50, 0.45},  // floor
    {0.85, 0.85, 0.80},  // wall
    {0.60, 0.35, 0.20},  // box_furniture
    {0.20, 0.35, 0.70},  // thin_board
    {0.75, 0.75, 0.30},  // column
    {0.40, 0.70, 0.40},  // clutter
}};

struct Surface {
  double area;
  Sampler sample;
};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double truncated_normal(Rng& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, sigma);
  for (;;) {
    const double v = n(rng);
    if (std::abs(v) <= 3.0 * sigma) return v;
  }
}

// Axis-aligned rectangle spanned from `origin` along axes a and b.
Surface rectangle(Point3 origin, std::size_t a, double len_a, std::size_t b, double len_b) {
  return {len_a * len_b, [=](Rng& rng) {
            Point3 p = origin;
            p[a] += uniform(rng, 0.0, len_a);
            p[b] += uniform(rng, 0.0, len_b);
            return p;
          }};
}

// Picks a surface with probability proportional to its area.
Point3 sample_surfaces(const std::vector<Surface>& surfaces, Rng& rng) {
  double total = 0.0;
  for (const Surface& s : surfaces) total += s.area;
  double r = uniform(rng, 0.0, total);
  for (const Surface& s : surfaces) {
    if (r < s.area) return s.sample(rng);
    r -= s.area;
  }
  return surfaces.back().sample(rng);
}

}  // namespace

PointCloud generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  const double sx = spec.extent[0], sy = spec.extent[1], sz = spec.extent[2];
  if (!(sx > 1.0 && sy > 1.0 && sz > 1.0)) throw GenerationError("scene extent must exceed 1 m on every axis");
  if (spec.small_object_fraction < 0.0 || spec.clutter_fraction < 0.0 ||
      spec.small_object_fraction + spec.clutter_fraction >= 0.9) {
    throw GenerationError("small_object_fraction + clutter_fraction must stay below 0.9");
  }
  if (spec.boxes == 0 || spec.boards == 0 || spec.columns == 0) {
    throw GenerationError("every class needs at least one primitive");
  }
  Rng rng(seed);

  std::array<std::vector<Surface>, kSceneClasses> surfaces;
  surfaces[0].push_back(rectangle({0, 0, 0}, 0, sx, 1, sy));
  surfaces[1] = {rectangle({0, 0, 0}, 0, sx, 2, sz), rectangle({0, sy, 0}, 0, sx, 2, sz),
                 rectangle({0, 0, 0}, 1, sy, 2, sz), rectangle({sx, 0, 0}, 1, sy, 2, sz)};

  // Boxes stand in the central region, clear of the walls.
  for (std::size_t i = 0; i < spec.boxes; ++i) {
    const double w = uniform(rng, 0.5, 1.1), d = uniform(rng, 0.4, 0.9), h = uniform(rng, 0.4, 0.9);
    const double x = uniform(rng, 0.5, sx - 0.5 - w), y = uniform(rng, 0.5, sy - 0.5 - d);
    auto& s = surfaces[2];
    s.push_back(rectangle({x, y, h}, 0, w, 1, d));
    s.push_back(rectangle({x, y, 0}, 0, w, 2, h));
    s.push_back(rectangle({x, y + d, 0}, 0, w, 2, h));
    s.push_back(rectangle({x, y, 0}, 1, d, 2, h));
    s.push_back(rectangle({x + w, y, 0}, 1, d, 2, h));
  }

  // Boards hang a few centimetres in front of a wall.
  for (std::size_t i = 0; i < spec.boards; ++i) {
    const std::size_t wall = i % 4;
    const double w = uniform(rng, 0.8, 1.4), h = uniform(rng, 0.5, 0.9), z = uniform(rng, 0.9, sz - h - 0.1);
    const double gap = 0.04;
    const bool along_x = wall < 2;
    const double span = along_x ? sx : sy;
    const double s0 = uniform(rng, 0.2, span - 0.2 - w);
    Point3 origin{};
    if (along_x) origin = {s0, wall == 0 ? gap : sy - gap, z};
    else origin = {wall == 2 ? gap : sx - gap, s0, z};
    surfaces[3].push_back(rectangle(origin, along_x ? 0 : 1, w, 2, h));
  }

  // Columns: full-height cylinders near the room corners.
  for (std::size_t i = 0; i < spec.columns; ++i) {
    const double r = uniform(rng, 0.12, 0.2);
    const double cx = (i % 2 == 0) ? uniform(rng, 0.35, 0.8) : sx - uniform(rng, 0.35, 0.8);
    const double cy = (i / 2 % 2 == 0) ? sy - uniform(rng, 0.35, 0.8) : uniform(rng, 0.35, 0.8);
    surfaces[4].push_back({2.0 * std::numbers::pi * r * sz, [=](Rng& g) {
                             const double t = uniform(g, 0.0, 2.0 * std::numbers::pi);
                             return Point3{cx + r * std::cos(t), cy + r * std::sin(t), uniform(g, 0.0, sz)};
                           }});
  }

  // Clutter: small blobs resting on the floor.
  const std::size_t blobs = 3;
  for (std::size_t i = 0; i < blobs; ++i) {
    const Point3 c{uniform(rng, 0.8, sx - 0.8), uniform(rng, 0.8, sy - 0.8), 0.12};
    surfaces[5].push_back({1.0, [=](Rng& g) {
                             std::normal_distribution<double> n(0.0, 1.0);
                             Point3 d{n(g), n(g), n(g)};
                             const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + 1e-12;
                             const double rad = 0.1 * std::cbrt(uniform(g, 0.0, 1.0));
                             return Point3{c[0] + d[0] / len * rad, c[1] + d[1] / len * rad,
                                           std::max(c[2] + d[2] / len * rad, 0.02)};
                           }});
  }

  // Point budget per class: small objects and clutter take fixed shares,
  // the large classes split the rest by area.
  double large_area = 0.0, all_area = 0.0;
  std::array<double, kSceneClasses> area{};
  for (std::size_t c = 0; c < kSceneClasses; ++c) {
    for (const Surface& s : surfaces[c]) area[c] += s.area;
    all_area += area[c];
    if (c <= 2) large_area += area[c];
  }
  const std::size_t total =
      spec.points > 0 ? spec.points : static_cast<std::size_t>(std::llround(spec.density * all_area));
  std::array<std::size_t, kSceneClasses> budget{};
  const double t = static_cast<double>(total);
  budget[3] = static_cast<std::size_t>(t * spec.small_object_fraction * 0.5);
  budget[4] = static_cast<std::size_t>(t * spec.small_object_fraction * 0.5);
  budget[5] = static_cast<std::size_t>(t * spec.clutter_fraction);
  const std::size_t rest = total - budget[3] - budget[4] - budget[5];
  budget[0] = static_cast<std::size_t>(static_cast<double>(rest) * area[0] / large_area);
  budget[1] = static_cast<std::size_t>(static_cast<double>(rest) * area[1] / large_area);
  budget[2] = rest - budget[0] - budget[1];
  for (std::size_t c = 0; c < kSceneClasses; ++c) {
    if (budget[c] < spec.min_class_points) {
      throw GenerationError("class " + scene_class_names()[c] + " gets " + std::to_string(budget[c]) +
                            " points, below the minimum of " + std::to_string(spec.min_class_points) +
                            " (raise density or points)");
    }
  }

  PointCloud cloud;
  cloud.num_classes = kSceneClasses;
  std::normal_distribution<double> color_noise(0.0, spec.color_noise);
  for (std::size_t c = 0; c < kSceneClasses; ++c) {
    for (std::size_t i = 0; i < budget[c]; ++i) {
      Point3 p = sample_surfaces(surfaces[c], rng);
      for (double& v : p) v += truncated_normal(rng, spec.noise_sigma);
      Point3 col = kBaseColor[c];
      for (double& v : col) v = std::clamp(v + color_noise(rng), 0.0, 1.0);
      cloud.coords.push_back(p);
      cloud.colors.push_back(col);
      cloud.labels.push_back(c);
    }
  }
  // Interleave classes so file order carries no label information.
  std::vector<std::size_t> order(cloud.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  return cloud.subset(order);
}

}  // namespace codecforge
