#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "codecforge/point_ops.hpp"

namespace codecforge {

enum class SceneClass : std::size_t { Floor, Wall, BoxFurniture, ThinBoard, Column, Clutter };
inline constexpr std::size_t kSceneClasses = 6;
const std::array<std::string, kSceneClasses>& scene_class_names();

struct SceneSpec {
  Point3 extent{4.0, 4.0, 2.5};        // room size (m)
  double density = 150.0;              // points per m² of surface
  std::size_t points = 0;              // exact point count; 0 derives it from density
  double small_object_fraction = 0.15; // share of thin_board + column points
  double clutter_fraction = 0.05;
  double noise_sigma = 0.005;          // coordinate jitter (m), truncated at 3 sigma
  double color_noise = 0.04;
  std::size_t boxes = 3;
  std::size_t boards = 2;
  std::size_t columns = 2;
  std::size_t min_class_points = kDefaultNeighbors;
};

// Floor and four walls, boxes standing on the floor, thin boards mounted on
// walls, vertical cylinder columns, clusters of clutter. Throws
// GenerationError when the budget cannot give every class min_class_points.
PointCloud generate_scene(const SceneSpec& spec, std::uint64_t seed);

}  // namespace codecforge
