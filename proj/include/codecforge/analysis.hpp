#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "codecforge/graph.hpp"
#include "json.hpp"

namespace codecforge {

struct NodeCost {
  NodeId id;
  std::size_t points = 0;  // rows of this node's resolution
  std::size_t params = 0;
  std::size_t macs = 0;
};

struct ComponentCost {
  std::string name;  // "embedding", "head_i_j", "final"
  std::size_t params = 0;
  std::size_t macs = 0;
};

// Static cost of a model built from a graph. MACs count linear layers only.
struct AnalysisReport {
  TopologyKind kind = TopologyKind::UNext;
  int levels = 0;
  BlockKind block = BlockKind::SharedMlp;
  std::size_t input_points = 0;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::vector<NodeCost> nodes;  // graph execution order
  std::vector<ComponentCost> components;

  std::size_t node_params = 0;
  std::size_t total_params = 0;
  std::size_t total_macs = 0;

  // Share of total parameters per row 0..L; the last entry holds the
  // embedding, heads and final head. Sums to 1.
  std::vector<double> row_fractions;
  // Nodes (L-1,0), (L,0), (L-1,1): the deepest one-level U-Net.
  double deepest_subnetwork_share = 0.0;
  // The U-Net backbone: encoder column plus nodes (i, L-i).
  double backbone_share = 0.0;
  // Nodes outside the backbone.
  double extra_node_share = 0.0;
  // Disjoint parameter shares summing to 1: "deepest_subnetwork", then
  // "row_i" for the remaining nodes of each row, then "other" (embedding and heads).
  std::vector<std::pair<std::string, double>> parts;
};

AnalysisReport analyze(const GraphSpec& g, std::size_t input_points, std::size_t input_dim = 6,
                       std::size_t num_classes = 6);

nlohmann::json to_json(const AnalysisReport& r);
// node_i,node_j,params,macs per node.
std::string to_csv(const AnalysisReport& r);

}  // namespace codecforge
