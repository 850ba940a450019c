#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "codecforge/point_ops.hpp"

namespace codecforge {

// ASCII: "PCSEG v1 <count> <classes>" then "x y z r g b label" per point,
// floats with six fractional digits. Clouds without colors are written black.
void write_pcseg(std::ostream& out, const PointCloud& cloud);
PointCloud read_pcseg(std::istream& in, const std::string& source = "<stream>");

// Binary twin, little-endian: "PCSB", u32 count, u32 classes, then per point
// 3×f32 xyz, 3×f32 rgb, u16 label.
void write_pcsb(std::ostream& out, const PointCloud& cloud);
PointCloud read_pcsb(std::istream& in, const std::string& source = "<stream>");

// Picks the format from the extension on save (".pcsb" is binary) and from the
// leading magic on load. Errors name the file.
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_cloud(const std::filesystem::path& path);

}  // namespace codecforge
