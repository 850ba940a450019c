#include "codecforge/model.hpp"

#include "codecforge/errors.hpp"

namespace codecforge {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kHeadSalt = 1;
constexpr NodeId kFinalHeadId{-2, 0};

}  // namespace

std::uint64_t component_seed(std::uint64_t seed, NodeId id, std::uint64_t salt) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(id.row) + 16));
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(id.col) + 16));
  return splitmix64(h ^ salt);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b) ^ c);
}

std::string node_prefix(NodeId id) {
  return "node_" + std::to_string(id.row) + "_" + std::to_string(id.col);
}

Model::Model(GraphSpec graph, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed)
    : graph_(std::move(graph)), input_dim_(input_dim), num_classes_(num_classes) {
  if (const GraphDiagnostic d = validate_graph(graph_); !d.ok) throw GraphError("invalid graph: " + d.message);
  if (num_classes_ < 2) throw ConfigError("need at least 2 classes, got " + std::to_string(num_classes_));
  embedding_ = init_embedding(input_dim_, component_seed(seed, kEmbeddingNode));
  for (const NodeSpec& n : graph_.nodes) blocks_.emplace(n.id, init_params(n.block, component_seed(seed, n.id)));
  for (const NodeId id : graph_.supervised) {
    heads_.emplace(id, init_decoder_head(graph_.width(id), num_classes_, component_seed(seed, id, kHeadSalt)));
  }
  final_ = init_final_head(graph_.width(graph_.output_node()), num_classes_, graph_.dims.width_mult,
                           component_seed(seed, kFinalHeadId));
}

ModelOutput Model::forward(const SamplingHierarchy& hier, const Tensor& features, bool training,
                           std::uint64_t dropout_seed) {
  if (hier.depth() < static_cast<std::size_t>(graph_.levels) + 1) {
    throw DimensionError("model with L=" + std::to_string(graph_.levels) + " needs " +
                         std::to_string(graph_.levels + 1) + " hierarchy rows, got " + std::to_string(hier.depth()));
  }
  if (features.rank() != 2 || features.dim(0) != hier.full_size) {
    throw DimensionError("features " + shape_string(features.shape()) + " do not match a " +
                         std::to_string(hier.full_size) + "-point hierarchy");
  }
  if (graph_.options.block == BlockKind::LocalAgg && hier.k != graph_.options.k) {
    throw DimensionError("hierarchy built with K=" + std::to_string(hier.k) + " but the model uses K=" +
                         std::to_string(graph_.options.k));
  }

  ModelOutput out;
  std::map<NodeId, Tensor> values{{kEmbeddingNode, initial_embedding(features, embedding_, training)}};

  for (const NodeSpec& n : graph_.nodes) {
    std::vector<Tensor> parts;
    for (const NodeInput& in : graph_.effective_inputs(n)) {
      const Tensor& src = values.at(in.source);
      switch (in.transform) {
        case EdgeTransform::Up: parts.push_back(upsample_nearest(src, hier, n.id.row)); break;
        case EdgeTransform::Down: parts.push_back(downsample_gather(src, hier, n.id.row)); break;
        default: parts.push_back(src); break;
      }
    }
    const Tensor x = parts.size() == 1 ? parts.front() : concat(parts, 1);
    BlockParams& params = blocks_.at(n.id);
    Tensor y;
    try {
      if (n.block.kind == BlockKind::SharedMlp) {
        y = shared_mlp_block(x, params, training);
      } else {
        const HierarchyRow& row = hier.rows[static_cast<std::size_t>(n.id.row)];
        y = local_agg_block(x, row.coords, row.knn, params, training);
      }
    } catch (const DimensionError& e) {
      throw DimensionError("node " + to_string(n.id) + ": " + e.what());
    }
    values.emplace(n.id, y);
    out.nodes.emplace(n.id, y);
  }

  for (auto& [id, head] : heads_) out.node_logits.emplace(id, decoder_head(values.at(id), head));

  const Tensor top = values.at(graph_.output_node());
  if (training) {
    out.logits = final_head(upsample_nearest(top, hier, -1), final_, training, dropout_seed);
  } else {
    // Pointwise without batch statistics or dropout, so classify the distinct
    // row-0 points and copy; identical to classifying the upsampled rows.
    out.logits = upsample_nearest(final_head(top, final_, false, dropout_seed), hier, -1);
  }
  return out;
}

void Model::visit(const ParamVisitor& v) {
  codecforge::visit(embedding_, "embedding", v);
  for (const NodeSpec& n : graph_.nodes) codecforge::visit(blocks_.at(n.id), node_prefix(n.id), v);
  for (auto& [id, head] : heads_) codecforge::visit(head, "head_" + std::to_string(id.row) + "_" + std::to_string(id.col), v);
  codecforge::visit(final_, "final", v);
}

std::vector<Tensor> Model::parameters() {
  std::vector<Tensor> out;
  visit(ParamVisitor{[&](const std::string&, Tensor& t) { out.push_back(t); }, nullptr});
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t total = 0;
  visit(ParamVisitor{[&](const std::string&, Tensor& t) { total += t.size(); }, nullptr});
  return total;
}

}  // namespace codecforge
