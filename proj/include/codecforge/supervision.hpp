#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "codecforge/graph.hpp"
#include "codecforge/model.hpp"
#include "codecforge/point_ops.hpp"
#include "codecforge/tensor.hpp"

namespace codecforge {

enum class SupervisionMode { NoDS, FullResolution, Lateral, MultiLevel };

std::string to_string(SupervisionMode mode);
SupervisionMode parse_supervision_mode(const std::string& text);

// NoDS: none. MultiLevel: every decoder node. FullResolution: decoder nodes of
// row 0. Lateral: the last node of each row that has a decoder node.
std::set<NodeId> select_supervised_nodes(const GraphSpec& g, SupervisionMode mode);

// Copy of g with its supervised set replaced by the mode's selection.
GraphSpec with_supervision(GraphSpec g, SupervisionMode mode);

// Mean cross-entropy of row-`row` logits against the labels of the points
// that survive into that row.
Tensor node_loss(const Tensor& logits, std::span<const std::size_t> labels, const SamplingHierarchy& hier,
                 int row);

// Mean of the per-node losses; a zero scalar when nothing is supervised.
Tensor loss_ds(std::span<const Tensor> per_node);

struct LossReport {
  std::map<NodeId, double> per_node;
  double l_ds = 0.0;
  double l_oa = 0.0;
  double l_h = 0.0;
  std::size_t n_supervised = 0;
  std::size_t num_classes = 0;
  int levels = 0;
};

// l_h = l_ds + l_oa. Non-finite inputs throw NumericError.
LossReport loss_hybrid(double l_ds, double l_oa);

struct HybridLoss {
  Tensor total;  // differentiable l_h
  Tensor ds;
  Tensor oa;
  LossReport report;
};

// Losses of one forward pass: every supervised node head against its row's
// labels, and the final logits against the full-resolution labels.
HybridLoss hybrid_loss(const ModelOutput& out, std::span<const std::size_t> labels, const SamplingHierarchy& hier,
                       const GraphSpec& g, std::size_t num_classes);

}  // namespace codecforge
