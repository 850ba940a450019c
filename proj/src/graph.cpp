#include "codecforge/graph.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "codecforge/errors.hpp"

namespace codecforge {

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::UNet: return "unet";
    case TopologyKind::UNetPlus: return "unetplus";
    case TopologyKind::UNetPlusPlus: return "unetplusplus";
    case TopologyKind::UNetPlusD: return "unetplusd";
    case TopologyKind::UNext: return "unext";
    case TopologyKind::UNextDense: return "unextdense";
  }
  return "?";
}

std::string to_string(EdgeTransform t) {
  switch (t) {
    case EdgeTransform::Horizontal: return "horizontal";
    case EdgeTransform::Up: return "up";
    case EdgeTransform::Down: return "down";
    case EdgeTransform::LongSkip: return "longskip";
  }
  return "?";
}

TopologyKind parse_topology(const std::string& text) {
  static const std::map<std::string, TopologyKind> names{
      {"unet", TopologyKind::UNet},           {"unetplus", TopologyKind::UNetPlus},
      {"unet+", TopologyKind::UNetPlus},      {"unetplusplus", TopologyKind::UNetPlusPlus},
      {"unet++", TopologyKind::UNetPlusPlus}, {"unetplusd", TopologyKind::UNetPlusD},
      {"unet+d", TopologyKind::UNetPlusD},    {"unext", TopologyKind::UNext},
      {"unextdense", TopologyKind::UNextDense}, {"unext-dense", TopologyKind::UNextDense},
  };
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (auto it = names.find(lower); it != names.end()) return it->second;
  throw ConfigError("unknown topology '" + text +
                    "' (expected unet, unetplus, unetplusplus, unetplusd, unext or unextdense)");
}

const std::vector<TopologyKind>& all_topologies() {
  static const std::vector<TopologyKind> kinds{TopologyKind::UNet,      TopologyKind::UNetPlus,
                                               TopologyKind::UNetPlusPlus, TopologyKind::UNetPlusD,
                                               TopologyKind::UNext,     TopologyKind::UNextDense};
  return kinds;
}

std::string to_string(NodeId id) {
  if (id == kEmbeddingNode) return "embedding";
  return "X(" + std::to_string(id.row) + "," + std::to_string(id.col) + ")";
}

// ---- GraphSpec -----------------------------------------------------------------

bool GraphSpec::contains(NodeId id) const {
  return std::any_of(nodes.begin(), nodes.end(), [&](const NodeSpec& n) { return n.id == id; });
}

const NodeSpec& GraphSpec::node(NodeId id) const {
  for (const NodeSpec& n : nodes)
    if (n.id == id) return n;
  throw GraphError("graph has no node " + to_string(id));
}

NodeSpec& GraphSpec::node(NodeId id) {
  return const_cast<NodeSpec&>(std::as_const(*this).node(id));
}

std::size_t GraphSpec::width(NodeId id) const {
  if (id == kEmbeddingNode) return kEmbeddingWidth;
  return dims.width(static_cast<std::size_t>(id.row));
}

std::size_t GraphSpec::decoder_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const NodeSpec& n) {
    return n.is_decoder();
  }));
}

std::set<Edge> GraphSpec::edges() const {
  std::set<Edge> out;
  for (const NodeSpec& n : nodes)
    for (const NodeInput& in : n.inputs) out.insert({in.source, n.id, in.transform});
  return out;
}

std::set<std::pair<NodeId, NodeId>> GraphSpec::connections() const {
  std::set<std::pair<NodeId, NodeId>> out;
  for (const NodeSpec& n : nodes)
    for (const NodeInput& in : n.inputs) out.insert({in.source, n.id});
  return out;
}

std::vector<NodeInput> GraphSpec::effective_inputs(const NodeSpec& n) const {
  std::vector<NodeInput> out;
  for (const NodeInput& in : n.inputs) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](const NodeInput& o) { return o.source == in.source; });
    if (!seen) out.push_back(in);
  }
  return out;
}

std::size_t GraphSpec::input_width(const NodeSpec& n) const {
  std::size_t total = 0;
  for (const NodeInput& in : effective_inputs(n)) total += width(in.source);
  return total;
}

// ---- construction ----------------------------------------------------------------

namespace {

std::vector<NodeInput> decoder_inputs(TopologyKind kind, int levels, int i, int j) {
  using T = EdgeTransform;
  std::vector<NodeInput> in;
  const NodeId up{i + 1, j - 1};
  switch (kind) {
    case TopologyKind::UNet:
      in = {{{i, 0}, T::Horizontal}, {up, T::Up}};
      break;
    case TopologyKind::UNetPlus:
      in = {{{i, j - 1}, T::Horizontal}, {up, T::Up}};
      break;
    case TopologyKind::UNetPlusPlus:
      for (int c = 0; c < j; ++c) in.push_back({{i, c}, T::Horizontal});
      in.push_back({up, T::Up});
      break;
    case TopologyKind::UNetPlusD:
    case TopologyKind::UNext:
    case TopologyKind::UNextDense:
      in = {{{i, j - 1}, T::Horizontal}, {up, T::Up}};
      if (i > 0) in.push_back({{i - 1, j}, T::Down});
      if (kind == TopologyKind::UNext && i + j == levels) in.push_back({{i, 0}, T::LongSkip});
      if (kind == TopologyKind::UNextDense)
        for (int c = 0; c + 1 < j; ++c) in.push_back({{i, c}, T::LongSkip});
      break;
  }
  return in;
}

}  // namespace

GraphSpec build_topology(TopologyKind kind, int levels, const DimSchedule& dims, const GraphOptions& options) {
  if (levels < 1 || static_cast<std::size_t>(levels) + 1 > dims.rows()) {
    throw ConfigError("levels must be in [1, " + std::to_string(dims.rows() - 1) + "] for a " +
                      std::to_string(dims.rows()) + "-row dim schedule, got " + std::to_string(levels));
  }
  if (options.block == BlockKind::LocalAgg && options.k == 0) throw ConfigError("LocalAgg blocks need k >= 1");

  GraphSpec g;
  g.kind = kind;
  g.levels = levels;
  g.dims = dims;
  g.options = options;

  // Column-major, as the columns are produced one sub-network at a time.
  for (int j = 0; j <= levels; ++j) {
    for (int i = 0; i + j <= levels; ++i) {
      NodeSpec n;
      n.id = {i, j};
      if (j == 0) {
        n.inputs = {{i == 0 ? kEmbeddingNode : NodeId{i - 1, 0}, EdgeTransform::Down}};
      } else {
        if (kind == TopologyKind::UNet && i + j != levels) continue;
        n.inputs = decoder_inputs(kind, levels, i, j);
      }
      g.nodes.push_back(std::move(n));
    }
  }
  for (NodeSpec& n : g.nodes) {
    n.block.kind = options.block;
    n.block.in_dim = g.input_width(n);
    n.block.out_dim = g.width(n.id);
    n.block.k = options.block == BlockKind::LocalAgg ? options.k : 0;
    n.block.layers = options.block_layers;
  }
  return g;
}

// ---- validation ------------------------------------------------------------------

namespace {

int order_rank(EdgeTransform t) {
  switch (t) {
    case EdgeTransform::Horizontal: return 0;
    case EdgeTransform::Up: return 1;
    case EdgeTransform::Down: return 2;
    case EdgeTransform::LongSkip: return 3;
  }
  return 4;
}

int expected_source_row(EdgeTransform t, int target_row) {
  switch (t) {
    case EdgeTransform::Up: return target_row + 1;
    case EdgeTransform::Down: return target_row - 1;
    default: return target_row;
  }
}

GraphDiagnostic fail(std::string message, std::optional<NodeId> node = std::nullopt) {
  return {false, std::move(message), node};
}

}  // namespace

GraphDiagnostic validate_graph(const GraphSpec& g) {
  if (g.levels < 1 || static_cast<std::size_t>(g.levels) + 1 > g.dims.rows()) {
    return fail("levels " + std::to_string(g.levels) + " outside the dim schedule");
  }
  std::map<NodeId, std::size_t> position;
  for (std::size_t p = 0; p < g.nodes.size(); ++p) {
    const NodeId id = g.nodes[p].id;
    if (id.row < 0 || id.col < 0 || id.row + id.col > g.levels) {
      return fail("node " + to_string(id) + " lies outside the grid for L=" + std::to_string(g.levels), id);
    }
    if (!position.emplace(id, p).second) return fail("duplicate node " + to_string(id), id);
  }
  if (!position.count(g.output_node())) return fail("missing output node " + to_string(g.output_node()));

  // Edge-level checks.
  for (const NodeSpec& n : g.nodes) {
    if (n.inputs.empty()) return fail("node " + to_string(n.id) + " has no inputs", n.id);
    int last_rank = -1;
    for (const NodeInput& in : n.inputs) {
      const bool from_embedding = in.source == kEmbeddingNode;
      if (from_embedding && (n.id != NodeId{0, 0} || in.transform != EdgeTransform::Down)) {
        return fail("only " + to_string(NodeId{0, 0}) + " may read the embedding, via a down edge", n.id);
      }
      if (!from_embedding && !position.count(in.source)) {
        return fail("node " + to_string(n.id) + " reads missing node " + to_string(in.source), n.id);
      }
      if (in.source.row != expected_source_row(in.transform, n.id.row)) {
        return fail("resolution mismatch: " + to_string(in.transform) + " edge " + to_string(in.source) + " -> " +
                        to_string(n.id) + " must come from row " +
                        std::to_string(expected_source_row(in.transform, n.id.row)),
                    n.id);
      }
      const int rank = order_rank(in.transform);
      if (rank < last_rank) {
        return fail("node " + to_string(n.id) + " inputs out of order (expected horizontal, up, down, long skip)",
                    n.id);
      }
      last_rank = rank;
    }
  }

  // Acyclicity by iterative colouring.
  std::map<NodeId, int> colour;  // 0 white, 1 grey, 2 black
  for (const NodeSpec& start : g.nodes) {
    if (colour[start.id] != 0) continue;
    std::vector<std::pair<NodeId, std::size_t>> stack{{start.id, 0}};
    colour[start.id] = 1;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      const NodeSpec& n = g.nodes[position.at(id)];
      if (next == n.inputs.size()) {
        colour[id] = 2;
        stack.pop_back();
        continue;
      }
      const NodeId src = n.inputs[next++].source;
      if (src == kEmbeddingNode) continue;
      if (colour[src] == 1) return fail("cycle through " + to_string(src) + " and " + to_string(id), src);
      if (colour[src] == 0) {
        colour[src] = 1;
        stack.push_back({src, 0});
      }
    }
  }

  for (const NodeSpec& n : g.nodes) {
    for (const NodeInput& in : n.inputs) {
      if (in.source != kEmbeddingNode && position.at(in.source) > position.at(n.id)) {
        return fail("execution order runs " + to_string(n.id) + " before its input " + to_string(in.source), n.id);
      }
    }
    if (n.block.in_dim != g.input_width(n)) {
      return fail("node " + to_string(n.id) + " block expects " + std::to_string(n.block.in_dim) +
                      " input features but its inputs provide " + std::to_string(g.input_width(n)),
                  n.id);
    }
    if (n.block.out_dim != g.width(n.id)) {
      return fail("node " + to_string(n.id) + " outputs " + std::to_string(n.block.out_dim) + " features, row " +
                      std::to_string(n.id.row) + " carries " + std::to_string(g.width(n.id)),
                  n.id);
    }
  }
  for (const NodeId id : g.supervised) {
    if (!position.count(id)) return fail("supervised node " + to_string(id) + " is not in the graph", id);
  }
  return {};
}

// ---- export ------------------------------------------------------------------------

namespace {

std::string dot_name(NodeId id) {
  if (id == kEmbeddingNode) return "embedding";
  return "X_" + std::to_string(id.row) + "_" + std::to_string(id.col);
}

const char* dot_style(EdgeTransform t) {
  switch (t) {
    case EdgeTransform::Horizontal: return "solid";
    case EdgeTransform::Up: return "dashed";
    case EdgeTransform::Down: return "dotted";
    case EdgeTransform::LongSkip: return "bold";
  }
  return "solid";
}

nlohmann::json id_json(NodeId id) { return nlohmann::json::array({id.row, id.col}); }

}  // namespace

std::string to_dot(const GraphSpec& g) {
  std::ostringstream out;
  out << "digraph " << to_string(g.kind) << "_L" << g.levels << " {\n";
  out << "  rankdir=LR;\n";
  for (const NodeSpec& n : g.nodes) {
    out << "  " << dot_name(n.id) << " [label=\"X_{" << n.id.row << "," << n.id.col << "}\"";
    if (g.supervised.count(n.id)) out << ", peripheries=2";
    out << "];\n";
  }
  for (const NodeSpec& n : g.nodes) {
    for (const NodeInput& in : n.inputs) {
      out << "  " << dot_name(in.source) << " -> " << dot_name(n.id) << " [style=" << dot_style(in.transform)
          << ", label=\"" << to_string(in.transform) << "\"];\n";
    }
  }
  out << "}\n";
  return out.str();
}

nlohmann::json to_json(const GraphSpec& g) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  for (const NodeSpec& n : g.nodes) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const NodeInput& in : n.inputs) {
      inputs.push_back({{"source", id_json(in.source)}, {"transform", to_string(in.transform)}});
      edges.push_back(
          {{"source", id_json(in.source)}, {"target", id_json(n.id)}, {"transform", to_string(in.transform)}});
    }
    nodes.push_back({{"id", id_json(n.id)},
                     {"width", n.block.out_dim},
                     {"input_width", n.block.in_dim},
                     {"params", count_block_params(n.block)},
                     {"inputs", std::move(inputs)}});
  }
  nlohmann::json supervised = nlohmann::json::array();
  for (const NodeId id : g.supervised) supervised.push_back(id_json(id));
  return {{"schema", "codecforge.graph/1"},
          {"topology", to_string(g.kind)},
          {"levels", g.levels},
          {"block", to_string(g.options.block)},
          {"k", g.options.k},
          {"row_widths", [&] {
             std::vector<std::size_t> w;
             for (int r = 0; r <= g.levels; ++r) w.push_back(g.width({r, 0}));
             return w;
           }()},
          {"output", id_json(g.output_node())},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)},
          {"supervised", std::move(supervised)}};
}

}  // namespace codecforge
