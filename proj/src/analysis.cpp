#include "codecforge/analysis.hpp"

#include "codecforge/errors.hpp"
#include "codecforge/point_ops.hpp"

namespace codecforge {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

bool in_backbone(NodeId id, int levels) { return id.col == 0 || id.row + id.col == levels; }

bool in_deepest_subnetwork(NodeId id, int levels) {
  return (id.col == 0 && id.row >= levels - 1) || (id.row == levels - 1 && id.col == 1);
}

}  // namespace

AnalysisReport analyze(const GraphSpec& g, std::size_t input_points, std::size_t input_dim,
                       std::size_t num_classes) {
  AnalysisReport r;
  r.kind = g.kind;
  r.levels = g.levels;
  r.block = g.options.block;
  r.input_points = input_points;
  r.input_dim = input_dim;
  r.num_classes = num_classes;

  // Row sizes follow the hierarchy's ceil(n / ratio) chain.
  std::vector<std::size_t> row_points;
  std::size_t n = input_points;
  for (int i = 0; i <= g.levels && g.levels > 0; ++i) {
    n = ceil_div(n, kDefaultRatios.at(static_cast<std::size_t>(i)));
    row_points.push_back(n);
  }

  std::vector<std::size_t> row_params(static_cast<std::size_t>(std::max(g.levels, 0)) + 2, 0);
  std::vector<std::size_t> rest_of_row(row_params.size() - 1, 0);
  std::size_t deepest = 0, backbone = 0, extra = 0;
  for (const NodeSpec& node : g.nodes) {
    NodeCost c{node.id, row_points.at(static_cast<std::size_t>(node.id.row)), count_block_params(node.block), 0};
    c.macs = c.points * block_macs_per_point(node.block);
    r.nodes.push_back(c);
    r.node_params += c.params;
    r.total_macs += c.macs;
    row_params[static_cast<std::size_t>(node.id.row)] += c.params;
    if (in_deepest_subnetwork(node.id, g.levels)) {
      deepest += c.params;
    } else {
      rest_of_row[static_cast<std::size_t>(node.id.row)] += c.params;
    }
    (in_backbone(node.id, g.levels) ? backbone : extra) += c.params;
  }

  auto add_component = [&](std::string name, std::size_t params, std::size_t macs) {
    r.components.push_back({std::move(name), params, macs});
    r.total_macs += macs;
    row_params.back() += params;
  };
  if (!g.nodes.empty()) {
    add_component("embedding", count_dense_params(input_dim, kEmbeddingWidth),
                  input_points * input_dim * kEmbeddingWidth);
    for (const NodeId id : g.supervised) {
      const std::size_t w = g.width(id);
      add_component("head_" + std::to_string(id.row) + "_" + std::to_string(id.col),
                    count_linear_params(w, num_classes),
                    row_points.at(static_cast<std::size_t>(id.row)) * w * num_classes);
    }
    const std::size_t w = g.width(g.output_node());
    add_component("final", count_final_head_params(w, num_classes, g.dims.width_mult),
                  input_points * final_head_macs_per_point(w, num_classes, g.dims.width_mult));
  }

  r.total_params = r.node_params;
  for (const ComponentCost& c : r.components) r.total_params += c.params;
  if (r.total_params > 0) {
    const double total = static_cast<double>(r.total_params);
    for (const std::size_t p : row_params) r.row_fractions.push_back(static_cast<double>(p) / total);
    r.deepest_subnetwork_share = static_cast<double>(deepest) / total;
    r.backbone_share = static_cast<double>(backbone) / total;
    r.extra_node_share = static_cast<double>(extra) / total;
    r.parts.emplace_back("deepest_subnetwork", r.deepest_subnetwork_share);
    for (std::size_t i = 0; i < rest_of_row.size(); ++i) {
      r.parts.emplace_back("row_" + std::to_string(i), static_cast<double>(rest_of_row[i]) / total);
    }
    r.parts.emplace_back("other", static_cast<double>(row_params.back()) / total);
  }
  return r;
}

nlohmann::json to_json(const AnalysisReport& r) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const NodeCost& c : r.nodes) {
    nodes.push_back({{"node_i", c.id.row}, {"node_j", c.id.col}, {"points", c.points}, {"params", c.params},
                     {"macs", c.macs}});
  }
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& [name, share] : r.parts) parts.push_back({{"name", name}, {"share", share}});
  nlohmann::json components = nlohmann::json::array();
  for (const ComponentCost& c : r.components) {
    components.push_back({{"name", c.name}, {"params", c.params}, {"macs", c.macs}});
  }
  return {{"topology", to_string(r.kind)},
          {"levels", r.levels},
          {"block", to_string(r.block)},
          {"input_points", r.input_points},
          {"input_dim", r.input_dim},
          {"num_classes", r.num_classes},
          {"total_params", r.total_params},
          {"node_params", r.node_params},
          {"total_macs", r.total_macs},
          {"row_fractions", r.row_fractions},
          {"deepest_subnetwork_share", r.deepest_subnetwork_share},
          {"backbone_share", r.backbone_share},
          {"extra_node_share", r.extra_node_share},
          {"parts", std::move(parts)},
          {"nodes", std::move(nodes)},
          {"components", std::move(components)}};
}

std::string to_csv(const AnalysisReport& r) {
  std::string out = "node_i,node_j,params,macs\n";
  for (const NodeCost& c : r.nodes) {
    out += std::to_string(c.id.row) + "," + std::to_string(c.id.col) + "," + std::to_string(c.params) + "," +
           std::to_string(c.macs) + "\n";
  }
  return out;
}

}  // namespace codecforge
