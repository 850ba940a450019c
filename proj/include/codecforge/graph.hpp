#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "codecforge/blocks.hpp"
#include "json.hpp"

namespace codecforge {

enum class TopologyKind { UNet, UNetPlus, UNetPlusPlus, UNetPlusD, UNext, UNextDense };
enum class EdgeTransform { Horizontal, Up, Down, LongSkip };

std::string to_string(TopologyKind kind);
std::string to_string(EdgeTransform t);
TopologyKind parse_topology(const std::string& text);
const std::vector<TopologyKind>& all_topologies();

// row 0 is the first coded resolution (N/4); column 0 is the encoder.
struct NodeId {
  int row = 0;
  int col = 0;
  auto operator<=>(const NodeId&) const = default;
};

// Full-resolution output of the initial embedding; feeds the first encoder node.
inline constexpr NodeId kEmbeddingNode{-1, 0};

std::string to_string(NodeId id);

struct NodeInput {
  NodeId source;
  EdgeTransform transform = EdgeTransform::Horizontal;
  bool operator==(const NodeInput&) const = default;
};

struct NodeSpec {
  NodeId id;
  std::vector<NodeInput> inputs;  // [Horizontal..., Up, Down?, LongSkip...]
  CodingBlockSpec block;

  bool is_decoder() const { return id.col > 0; }
};

struct Edge {
  NodeId source;
  NodeId target;
  EdgeTransform transform = EdgeTransform::Horizontal;
  auto operator<=>(const Edge&) const = default;
};

struct GraphOptions {
  BlockKind block = BlockKind::SharedMlp;
  std::size_t k = kDefaultNeighbors;
  std::size_t block_layers = 2;
};

struct GraphSpec {
  TopologyKind kind = TopologyKind::UNext;
  int levels = 0;
  DimSchedule dims;
  GraphOptions options;
  std::vector<NodeSpec> nodes;  // execution order
  std::set<NodeId> supervised;

  bool contains(NodeId id) const;
  const NodeSpec& node(NodeId id) const;
  NodeSpec& node(NodeId id);
  NodeId output_node() const { return {0, levels}; }
  std::size_t width(NodeId id) const;
  std::size_t decoder_count() const;

  // Every recorded input, including long skips that repeat the horizontal source.
  std::set<Edge> edges() const;
  // Distinct (source, target) data paths.
  std::set<std::pair<NodeId, NodeId>> connections() const;

  // Inputs as executed: a source listed twice (the long skip into (i,1) repeats
  // the horizontal edge from (i,0)) contributes its tensor once.
  std::vector<NodeInput> effective_inputs(const NodeSpec& n) const;
  std::size_t input_width(const NodeSpec& n) const;
};

// 1 <= levels <= dims.rows() - 1.
GraphSpec build_topology(TopologyKind kind, int levels, const DimSchedule& dims = {},
                         const GraphOptions& options = {});

struct GraphDiagnostic {
  bool ok = true;
  std::string message;
  std::optional<NodeId> node;
};

GraphDiagnostic validate_graph(const GraphSpec& g);

std::string to_dot(const GraphSpec& g);
nlohmann::json to_json(const GraphSpec& g);

}  // namespace codecforge
