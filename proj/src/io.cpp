#include "codecforge/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "codecforge/errors.hpp"

namespace codecforge {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'S', 'B'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& source, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw ParseError(source + ": truncated binary file while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

}  // namespace

void write_pcseg(std::ostream& out, const PointCloud& cloud) {
  cloud.validate();
  if (!cloud.has_labels()) throw InputError("PCSEG files carry labels; cloud is unlabeled");
  out << "PCSEG v1 " << cloud.size() << ' ' << cloud.num_classes << '\n';
  char buf[256];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.coords[i];
    const Point3 c = cloud.has_colors() ? cloud.colors[i] : Point3{};
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f %zu\n", p[0], p[1], p[2], c[0], c[1], c[2],
                  cloud.labels[i]);
    out << buf;
  }
}

PointCloud read_pcseg(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(at_line(source, 1) + "missing PCSEG header");
  std::istringstream header(line);
  std::string magic, version, extra;
  long long count = -1, classes = -1;
  if (!(header >> magic >> version >> count >> classes) || magic != "PCSEG" || (header >> extra)) {
    throw ParseError(at_line(source, 1) + "expected 'PCSEG v1 <point_count> <class_count>', got '" + line + "'");
  }
  if (version != "v1") throw ParseError(at_line(source, 1) + "unsupported version '" + version + "'");
  if (count < 0 || classes <= 0) throw ParseError(at_line(source, 1) + "point and class counts must be positive");

  PointCloud cloud;
  cloud.num_classes = static_cast<std::size_t>(classes);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (cloud.size() == static_cast<std::size_t>(count)) {
      throw ParseError(at_line(source, line_no) + "header declares " + std::to_string(count) +
                       " points but the body has more");
    }
    std::istringstream row(line);
    Point3 p, c;
    long long label;
    if (!(row >> p[0] >> p[1] >> p[2] >> c[0] >> c[1] >> c[2] >> label) || (row >> extra)) {
      throw ParseError(at_line(source, line_no) + "expected 'x y z r g b label', got '" + line + "'");
    }
    if (label < 0 || label >= classes) {
      throw ParseError(at_line(source, line_no) + "label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    for (double v : c) {
      if (!(v >= 0.0 && v <= 1.0)) throw ParseError(at_line(source, line_no) + "color outside [0, 1]");
    }
    cloud.coords.push_back(p);
    cloud.colors.push_back(c);
    cloud.labels.push_back(static_cast<std::size_t>(label));
  }
  if (cloud.size() != static_cast<std::size_t>(count)) {
    throw ParseError(at_line(source, line_no) + "header declares " + std::to_string(count) +
                     " points, body has " + std::to_string(cloud.size()));
  }
  return cloud;
}

void write_pcsb(std::ostream& out, const PointCloud& cloud) {
  cloud.validate();
  if (!cloud.has_labels()) throw InputError("PCSB files carry labels; cloud is unlabeled");
  if (cloud.num_classes > std::numeric_limits<std::uint16_t>::max() ||
      cloud.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InputError("cloud too large for the PCSB format");
  }
  out.write(kMagic, 4);
  put_le(out, static_cast<std::uint32_t>(cloud.size()));
  put_le(out, static_cast<std::uint32_t>(cloud.num_classes));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 c = cloud.has_colors() ? cloud.colors[i] : Point3{};
    for (double v : cloud.coords[i]) put_le(out, static_cast<float>(v));
    for (double v : c) put_le(out, static_cast<float>(v));
    put_le(out, static_cast<std::uint16_t>(cloud.labels[i]));
  }
}

PointCloud read_pcsb(std::istream& in, const std::string& source) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError(source + ": missing PCSB magic");
  const auto count = get_le<std::uint32_t>(in, source, "the point count");
  const auto classes = get_le<std::uint32_t>(in, source, "the class count");
  if (classes == 0) throw ParseError(source + ": class count must be positive");
  PointCloud cloud;
  cloud.num_classes = classes;
  for (std::uint32_t i = 0; i < count; ++i) {
    Point3 p, c;
    for (double& v : p) v = get_le<float>(in, source, "coordinates");
    for (double& v : c) v = get_le<float>(in, source, "colors");
    const auto label = get_le<std::uint16_t>(in, source, "a label");
    if (label >= classes) {
      throw ParseError(source + ": point " + std::to_string(i) + " has label " + std::to_string(label) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    cloud.coords.push_back(p);
    cloud.colors.push_back(c);
    cloud.labels.push_back(label);
  }
  return cloud;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  const bool binary = path.extension() == ".pcsb";
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  binary ? write_pcsb(out, cloud) : write_pcseg(out, cloud);
  if (!out) throw InputError("failed writing " + path.string());
}

PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char head[4] = {};
  in.read(head, 4);
  in.clear();
  in.seekg(0);
  PointCloud cloud = std::memcmp(head, kMagic, 4) == 0 ? read_pcsb(in, path.string()) : read_pcseg(in, path.string());
  cloud.validate();
  return cloud;
}

}  // namespace codecforge
