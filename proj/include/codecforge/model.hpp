#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "codecforge/blocks.hpp"
#include "codecforge/graph.hpp"
#include "codecforge/point_ops.hpp"

namespace codecforge {

// Stable per-component seed so equal seeds give equal weights across topologies.
std::uint64_t component_seed(std::uint64_t seed, NodeId id, std::uint64_t salt = 0);
// Decorrelated stream seed for (seed, a, b, c).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

struct ModelOutput {
  std::map<NodeId, Tensor> nodes;        // (|row i|, width(i)) per node
  std::map<NodeId, Tensor> node_logits;  // supervised nodes only
  Tensor logits;                         // full resolution
};

class Model {
 public:
  Model(GraphSpec graph, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed);

  const GraphSpec& graph() const { return graph_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }

  // features: full-resolution n×input_dim, n = hier.full_size.
  ModelOutput forward(const SamplingHierarchy& hier, const Tensor& features, bool training,
                      std::uint64_t dropout_seed);

  void visit(const ParamVisitor& v);
  std::vector<Tensor> parameters();
  std::size_t parameter_count();

  DenseLayer& embedding() { return embedding_; }
  BlockParams& block(NodeId id) { return blocks_.at(id); }
  LinearLayer& head(NodeId id) { return heads_.at(id); }
  FinalHeadParams& final_head_params() { return final_; }

 private:
  GraphSpec graph_;
  std::size_t input_dim_;
  std::size_t num_classes_;
  DenseLayer embedding_;
  std::map<NodeId, BlockParams> blocks_;
  std::map<NodeId, LinearLayer> heads_;
  FinalHeadParams final_;
};

// Name of a node's parameters in checkpoints and analysis output.
std::string node_prefix(NodeId id);

}  // namespace codecforge
