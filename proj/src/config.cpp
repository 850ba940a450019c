#include "codecforge/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "codecforge/errors.hpp"

namespace codecforge {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("not a number: '" + v + "'");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(trim(item));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"topology", [](TrainConfig& c, const std::string& v) { c.topology = parse_topology(v); }},
      {"levels", [](TrainConfig& c, const std::string& v) { c.levels = parse_number<int>(v); }},
      {"block", [](TrainConfig& c, const std::string& v) { c.block = parse_block_kind(v); }},
      {"dims", [](TrainConfig& c, const std::string& v) { c.dims = v; }},
      {"width_mult", [](TrainConfig& c, const std::string& v) { c.width_mult = parse_number<std::size_t>(v); }},
      {"supervision", [](TrainConfig& c, const std::string& v) { c.supervision = parse_supervision_mode(v); }},
      {"k", [](TrainConfig& c, const std::string& v) { c.k = parse_number<std::size_t>(v); }},
      {"points", [](TrainConfig& c, const std::string& v) { c.points = parse_number<std::size_t>(v); }},
      {"batch_size", [](TrainConfig& c, const std::string& v) { c.batch_size = parse_number<std::size_t>(v); }},
      {"lr", [](TrainConfig& c, const std::string& v) { c.adam.lr = parse_number<double>(v); }},
      {"beta1", [](TrainConfig& c, const std::string& v) { c.adam.beta1 = parse_number<double>(v); }},
      {"beta2", [](TrainConfig& c, const std::string& v) { c.adam.beta2 = parse_number<double>(v); }},
      {"eps", [](TrainConfig& c, const std::string& v) { c.adam.eps = parse_number<double>(v); }},
      {"epochs", [](TrainConfig& c, const std::string& v) { c.epochs = parse_number<std::size_t>(v); }},
      {"seed", [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"input_dim", [](TrainConfig& c, const std::string& v) { c.input_dim = parse_number<std::size_t>(v); }},
      {"num_classes", [](TrainConfig& c, const std::string& v) { c.num_classes = parse_number<std::size_t>(v); }},
      {"data", [](TrainConfig& c, const std::string& v) { c.data = split_list(v); }},
      {"output", [](TrainConfig& c, const std::string& v) { c.output = v; }},
  };
  return table;
}

}  // namespace

DimSchedule TrainConfig::dim_schedule() const {
  DimSchedule d = dims == "wide" ? DimSchedule::wide() : DimSchedule{};
  d.width_mult = width_mult;
  return d;
}

GraphSpec TrainConfig::graph() const {
  return with_supervision(build_topology(topology, levels, dim_schedule(), GraphOptions{block, k, 2}), supervision);
}

TrainConfig parse_config(const std::string& text, const std::string& source) {
  TrainConfig cfg;
  bool has_seed = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
    if (key == "seed") has_seed = true;
  }
  if (!has_seed) throw ConfigError(source + ": seed is mandatory");
  validate(cfg);
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void validate(const TrainConfig& c) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(c.width_mult, "width_mult");
  positive(c.k, "k");
  positive(c.points, "points");
  positive(c.batch_size, "batch_size");
  if (c.dims != "default" && c.dims != "wide") throw ConfigError("dims must be default or wide, got " + c.dims);
  if (c.levels < 1 || c.levels > 4) throw ConfigError("levels must be in [1, 4], got " + std::to_string(c.levels));
  if (c.input_dim != 3 && c.input_dim != 6) throw ConfigError("input_dim must be 3 or 6");
  if (c.num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (!(c.adam.lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0 && c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(c.adam.eps > 0.0)) throw ConfigError("eps must be positive");
  std::size_t needed = 1;
  for (int i = 0; i <= c.levels; ++i) needed *= kDefaultRatios[static_cast<std::size_t>(i)];
  if (c.points < needed) {
    throw ConfigError("points = " + std::to_string(c.points) + " is too few for " + std::to_string(c.levels) +
                      " levels (need at least " + std::to_string(needed) + ")");
  }
}

std::string to_text(const TrainConfig& c) {
  std::string data;
  for (const std::string& d : c.data) data += (data.empty() ? "" : ",") + d;
  std::string out;
  auto line = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  line("topology", to_string(c.topology));
  line("levels", std::to_string(c.levels));
  line("block", to_string(c.block));
  line("dims", c.dims);
  line("width_mult", std::to_string(c.width_mult));
  line("supervision", to_string(c.supervision));
  line("k", std::to_string(c.k));
  line("points", std::to_string(c.points));
  line("batch_size", std::to_string(c.batch_size));
  line("lr", format_double(c.adam.lr));
  line("beta1", format_double(c.adam.beta1));
  line("beta2", format_double(c.adam.beta2));
  line("eps", format_double(c.adam.eps));
  line("epochs", std::to_string(c.epochs));
  line("seed", std::to_string(c.seed));
  line("input_dim", std::to_string(c.input_dim));
  line("num_classes", std::to_string(c.num_classes));
  if (!data.empty()) line("data", data);
  if (!c.output.empty()) line("output", c.output);
  return out;
}

std::uint64_t config_hash(const TrainConfig& c) {
  TrainConfig h = c;
  h.epochs = 0;
  h.data.clear();
  h.output.clear();
  std::uint64_t x = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : to_text(h)) {
    x ^= ch;
    x *= 0x100000001b3ULL;
  }
  return x;
}

}  // namespace codecforge
