#include "codecforge/supervision.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "codecforge/errors.hpp"

namespace codecforge {

std::string to_string(SupervisionMode mode) {
  switch (mode) {
    case SupervisionMode::NoDS: return "none";
    case SupervisionMode::FullResolution: return "full_resolution";
    case SupervisionMode::Lateral: return "lateral";
    case SupervisionMode::MultiLevel: return "multi_level";
  }
  return "?";
}

SupervisionMode parse_supervision_mode(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "none" || t == "nods" || t == "off") return SupervisionMode::NoDS;
  if (t == "full_resolution" || t == "full" || t == "fullresolution") return SupervisionMode::FullResolution;
  if (t == "lateral") return SupervisionMode::Lateral;
  if (t == "multi_level" || t == "multilevel" || t == "multi") return SupervisionMode::MultiLevel;
  throw ConfigError("unknown supervision mode '" + text +
                    "' (expected none, full_resolution, lateral or multi_level)");
}

std::set<NodeId> select_supervised_nodes(const GraphSpec& g, SupervisionMode mode) {
  std::set<NodeId> out;
  if (mode == SupervisionMode::NoDS) return out;
  std::map<int, NodeId> last_in_row;
  for (const NodeSpec& n : g.nodes) {
    if (!n.is_decoder()) continue;
    if (mode == SupervisionMode::MultiLevel || (mode == SupervisionMode::FullResolution && n.id.row == 0)) {
      out.insert(n.id);
    }
    auto [it, fresh] = last_in_row.emplace(n.id.row, n.id);
    if (!fresh && it->second.col < n.id.col) it->second = n.id;
  }
  if (mode == SupervisionMode::Lateral) {
    for (const auto& [row, id] : last_in_row) out.insert(id);
  }
  return out;
}

GraphSpec with_supervision(GraphSpec g, SupervisionMode mode) {
  g.supervised = select_supervised_nodes(g, mode);
  return g;
}

Tensor node_loss(const Tensor& logits, std::span<const std::size_t> labels, const SamplingHierarchy& hier,
                 int row) {
  if (labels.size() != hier.full_size) {
    throw DimensionError("node_loss: " + std::to_string(labels.size()) + " labels for a " +
                         std::to_string(hier.full_size) + "-point hierarchy");
  }
  const std::vector<std::size_t> row_labels = propagate_labels(labels, hier, row);
  if (logits.rank() != 2 || logits.dim(0) != row_labels.size()) {
    throw DimensionError("node_loss: logits " + shape_string(logits.shape()) + " but row " + std::to_string(row) +
                         " has " + std::to_string(row_labels.size()) + " points");
  }
  return softmax_cross_entropy(logits, row_labels);
}

Tensor loss_ds(std::span<const Tensor> per_node) {
  if (per_node.empty()) return Tensor::scalar(0.0);
  Tensor total = per_node.front();
  for (std::size_t i = 1; i < per_node.size(); ++i) total = add(total, per_node[i]);
  return per_node.size() == 1 ? total : scale(total, 1.0 / static_cast<double>(per_node.size()));
}

LossReport loss_hybrid(double l_ds, double l_oa) {
  if (!std::isfinite(l_ds) || !std::isfinite(l_oa)) {
    throw NumericError("non-finite loss: l_ds=" + std::to_string(l_ds) + " l_oa=" + std::to_string(l_oa));
  }
  LossReport r;
  r.l_ds = l_ds;
  r.l_oa = l_oa;
  r.l_h = l_ds + l_oa;
  return r;
}

HybridLoss hybrid_loss(const ModelOutput& out, std::span<const std::size_t> labels, const SamplingHierarchy& hier,
                       const GraphSpec& g, std::size_t num_classes) {
  std::vector<Tensor> per_node;
  std::map<NodeId, double> per_node_values;
  for (const NodeId id : g.supervised) {
    const auto it = out.node_logits.find(id);
    if (it == out.node_logits.end()) throw GraphError("no head output for supervised node " + to_string(id));
    per_node.push_back(node_loss(it->second, labels, hier, id.row));
    per_node_values.emplace(id, per_node.back().item());
  }
  HybridLoss h;
  h.ds = loss_ds(per_node);
  h.oa = node_loss(out.logits, labels, hier, -1);
  // Without supervised nodes the hybrid loss is the output loss itself.
  h.total = per_node.empty() ? h.oa : add(h.ds, h.oa);
  h.report = loss_hybrid(h.ds.item(), h.oa.item());
  h.report.per_node = std::move(per_node_values);
  h.report.n_supervised = per_node.size();
  h.report.num_classes = num_classes;
  h.report.levels = g.levels;
  return h;
}

}  // namespace codecforge
