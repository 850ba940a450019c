#pragma once

#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

// Just enough DOT to read back what the exporter writes: one statement per line,
// node declarations `name [attrs];` and edges `a -> b [attrs];`.
struct DotGraph {
  std::string name;
  std::vector<std::string> nodes;
  struct Edge {
    std::string from, to, style, label;
  };
  std::vector<Edge> edges;
};

inline std::optional<DotGraph> parse_dot(const std::string& text) {
  static const std::regex header(R"(^\s*digraph\s+(\w+)\s*\{\s*$)");
  static const std::regex attr_stmt(R"(^\s*\w+\s*=\s*\w+\s*;\s*$)");
  static const std::regex node_stmt(R"(^\s*(\w+)\s*\[([^\]]*)\]\s*;\s*$)");
  static const std::regex edge_stmt(R"(^\s*(\w+)\s*->\s*(\w+)\s*\[([^\]]*)\]\s*;\s*$)");
  static const std::regex style_attr(R"(style=(\w+))");
  static const std::regex label_attr(R"(label=\"([^\"]*)\")");

  std::istringstream in(text);
  std::string line;
  DotGraph g;
  std::smatch m;
  if (!std::getline(in, line) || !std::regex_match(line, m, header)) return std::nullopt;
  g.name = m[1];
  bool closed = false;
  while (std::getline(in, line)) {
    if (closed) {
      if (!line.empty()) return std::nullopt;
      continue;
    }
    if (line == "}") {
      closed = true;
    } else if (std::regex_match(line, m, edge_stmt)) {
      DotGraph::Edge e{m[1], m[2], "", ""};
      const std::string attrs = m[3];
      std::smatch a;
      if (std::regex_search(attrs, a, style_attr)) e.style = a[1];
      if (std::regex_search(attrs, a, label_attr)) e.label = a[1];
      g.edges.push_back(e);
    } else if (std::regex_match(line, m, node_stmt)) {
      g.nodes.push_back(m[1]);
    } else if (!std::regex_match(line, attr_stmt)) {
      return std::nullopt;
    }
  }
  if (!closed) return std::nullopt;
  return g;
}

}  // namespace testing
