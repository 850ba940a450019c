#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "codecforge/point_ops.hpp"
#include "codecforge/tensor.hpp"

namespace codecforge {

// Feature width per resolution row: row_dims[i] * width_mult + extra[i].
struct DimSchedule {
  std::vector<std::size_t> row_dims{16, 64, 128, 256, 512};
  std::size_t width_mult = 1;
  std::vector<std::size_t> extra;  // empty or one entry per row

  std::size_t width(std::size_t row) const;
  std::size_t rows() const { return row_dims.size(); }

  // The "wide" ablation: +2, +4, +8, +16, +32 on top of the default widths.
  static DimSchedule wide();
};

inline constexpr std::size_t kEmbeddingWidth = 8;
inline constexpr double kFinalDropout = 0.5;

enum class BlockKind { SharedMlp, LocalAgg };

std::string to_string(BlockKind kind);
BlockKind parse_block_kind(const std::string& text);

struct CodingBlockSpec {
  BlockKind kind = BlockKind::SharedMlp;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t k = 0;       // LocalAgg only
  std::size_t layers = 2;  // SharedMlp depth; LocalAgg always uses three layers
};

// linear -> batch norm -> relu
struct DenseLayer {
  Tensor weight;  // in × out
  Tensor bias;
  BatchNormState bn;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
};

struct LinearLayer {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
};

struct BlockParams {
  CodingBlockSpec spec;
  std::vector<DenseLayer> layers;
  // LocalAgg: rows of the mixing weight that act on the gathered neighbour
  // features (in_dim × hidden); layers[1].weight keeps the encoding rows.
  Tensor feature_weight;
};

struct FinalHeadParams {
  DenseLayer fc1;
  DenseLayer fc2;
  LinearLayer classifier;
};

// Glorot-uniform weights, zero biases, unit BN scale, zero shift.
DenseLayer init_dense(std::size_t in, std::size_t out, std::mt19937_64& rng);
LinearLayer init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng);
BlockParams init_params(const CodingBlockSpec& spec, std::uint64_t seed);
DenseLayer init_embedding(std::size_t input_dim, std::uint64_t seed);
LinearLayer init_decoder_head(std::size_t width, std::size_t classes, std::uint64_t seed);
FinalHeadParams init_final_head(std::size_t width, std::size_t classes, std::size_t width_mult,
                                std::uint64_t seed);

std::size_t count_dense_params(std::size_t in, std::size_t out);
std::size_t count_linear_params(std::size_t in, std::size_t out);
std::size_t count_block_params(const CodingBlockSpec& spec);
std::size_t count_final_head_params(std::size_t width, std::size_t classes, std::size_t width_mult);

// Multiply-accumulates per point of the block's row (linear layers only).
std::size_t block_macs_per_point(const CodingBlockSpec& spec);
std::size_t final_head_macs_per_point(std::size_t width, std::size_t classes, std::size_t width_mult);

Tensor dense_forward(const Tensor& x, DenseLayer& layer, bool training);

Tensor initial_embedding(const Tensor& features, DenseLayer& params, bool training);
Tensor shared_mlp_block(const Tensor& x, BlockParams& params, bool training);

// Per point p and neighbour q: [p, q, p - q, |p - q|] as an (n*K)×10 constant.
Tensor relative_position_encoding(std::span<const Point3> coords, const KnnTable& knn);

Tensor local_agg_block(const Tensor& x, std::span<const Point3> coords, const KnnTable& knn,
                       BlockParams& params, bool training);

Tensor decoder_head(const Tensor& x, const LinearLayer& params);
Tensor final_head(const Tensor& x, FinalHeadParams& params, bool training, std::uint64_t seed);

// Visits trainable tensors and BN running statistics under stable names.
struct ParamVisitor {
  std::function<void(const std::string&, Tensor&)> on_param;
  std::function<void(const std::string&, std::vector<double>&)> on_buffer;
};

void visit(DenseLayer& layer, const std::string& prefix, const ParamVisitor& v);
void visit(LinearLayer& layer, const std::string& prefix, const ParamVisitor& v);
void visit(BlockParams& block, const std::string& prefix, const ParamVisitor& v);
void visit(FinalHeadParams& head, const std::string& prefix, const ParamVisitor& v);

}  // namespace codecforge
