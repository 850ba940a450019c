#include "codecforge/blocks.hpp"

#include <array>
#include <cmath>

#include "codecforge/errors.hpp"

namespace codecforge {

namespace {

constexpr std::size_t kEncodingWidth = 10;

void check_width(const Tensor& x, std::size_t expected, const char* where) {
  if (x.rank() != 2 || x.dim(1) != expected) {
    throw DimensionError(std::string(where) + ": input " + shape_string(x.shape()) + " but block expects " +
                         std::to_string(expected) + " features");
  }
}

}  // namespace

std::size_t DimSchedule::width(std::size_t row) const {
  if (row >= row_dims.size()) {
    throw ConfigError("dim schedule has " + std::to_string(row_dims.size()) + " rows, asked for row " +
                      std::to_string(row));
  }
  const std::size_t add = row < extra.size() ? extra[row] : 0;
  return row_dims[row] * width_mult + add;
}

DimSchedule DimSchedule::wide() {
  DimSchedule d;
  d.extra = {2, 4, 8, 16, 32};
  return d;
}

std::string to_string(BlockKind kind) {
  return kind == BlockKind::SharedMlp ? "shared_mlp" : "local_agg";
}

BlockKind parse_block_kind(const std::string& text) {
  if (text == "shared_mlp" || text == "sharedmlp" || text == "mlp") return BlockKind::SharedMlp;
  if (text == "local_agg" || text == "localagg" || text == "lfa") return BlockKind::LocalAgg;
  throw ConfigError("unknown block kind '" + text + "' (expected shared_mlp or local_agg)");
}

// ---- initialisation ----------------------------------------------------------

namespace {

Tensor glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> w(in * out);
  for (double& v : w) v = u(rng);
  Tensor t({in, out}, std::move(w));
  t.set_requires_grad();
  return t;
}

void mark_trainable(BatchNormState& bn) {
  bn.gamma.set_requires_grad();
  bn.beta.set_requires_grad();
}

}  // namespace

DenseLayer init_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  DenseLayer layer{glorot(in, out, rng), Tensor::zeros({out}), BatchNormState::identity(out)};
  layer.bias.set_requires_grad();
  mark_trainable(layer.bn);
  return layer;
}

LinearLayer init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  LinearLayer layer{glorot(in, out, rng), Tensor::zeros({out})};
  layer.bias.set_requires_grad();
  return layer;
}

BlockParams init_params(const CodingBlockSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BlockParams p{spec, {}, {}};
  const std::size_t hidden = spec.out_dim;
  if (spec.kind == BlockKind::SharedMlp) {
    std::size_t in = spec.in_dim;
    for (std::size_t l = 0; l < spec.layers; ++l) {
      p.layers.push_back(init_dense(in, hidden, rng));
      in = hidden;
    }
  } else {
    p.layers.push_back(init_dense(kEncodingWidth, hidden, rng));
    DenseLayer mix = init_dense(hidden + spec.in_dim, hidden, rng);
    const std::array<std::size_t, 2> extents{hidden, spec.in_dim};
    std::vector<Tensor> halves = split(mix.weight.detach(), extents, 0);
    mix.weight = halves[0];
    mix.weight.set_requires_grad();
    p.feature_weight = halves[1];
    p.feature_weight.set_requires_grad();
    p.layers.push_back(std::move(mix));
    p.layers.push_back(init_dense(hidden, spec.out_dim, rng));
  }
  return p;
}

DenseLayer init_embedding(std::size_t input_dim, std::uint64_t seed) {
  if (input_dim != 3 && input_dim != 6) {
    throw ConfigError("initial embedding takes 3 (xyz) or 6 (xyz+rgb) features, got " +
                      std::to_string(input_dim));
  }
  std::mt19937_64 rng(seed);
  return init_dense(input_dim, kEmbeddingWidth, rng);
}

LinearLayer init_decoder_head(std::size_t width, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_linear(width, classes, rng);
}

FinalHeadParams init_final_head(std::size_t width, std::size_t classes, std::size_t width_mult,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FinalHeadParams h;
  h.fc1 = init_dense(width, 64 * width_mult, rng);
  h.fc2 = init_dense(64 * width_mult, 32 * width_mult, rng);
  h.classifier = init_linear(32 * width_mult, classes, rng);
  return h;
}

// ---- counting ----------------------------------------------------------------

std::size_t count_dense_params(std::size_t in, std::size_t out) { return in * out + out + 2 * out; }
std::size_t count_linear_params(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t count_block_params(const CodingBlockSpec& spec) {
  const std::size_t hidden = spec.out_dim;
  if (spec.kind == BlockKind::SharedMlp) {
    std::size_t total = 0, in = spec.in_dim;
    for (std::size_t l = 0; l < spec.layers; ++l) {
      total += count_dense_params(in, hidden);
      in = hidden;
    }
    return total;
  }
  return count_dense_params(kEncodingWidth, hidden) + count_dense_params(hidden + spec.in_dim, hidden) +
         count_dense_params(hidden, spec.out_dim);
}

std::size_t count_final_head_params(std::size_t width, std::size_t classes, std::size_t width_mult) {
  return count_dense_params(width, 64 * width_mult) +
         count_dense_params(64 * width_mult, 32 * width_mult) +
         count_linear_params(32 * width_mult, classes);
}

std::size_t block_macs_per_point(const CodingBlockSpec& spec) {
  const std::size_t hidden = spec.out_dim;
  if (spec.kind == BlockKind::SharedMlp) {
    std::size_t total = 0, in = spec.in_dim;
    for (std::size_t l = 0; l < spec.layers; ++l) {
      total += in * hidden;
      in = hidden;
    }
    return total;
  }
  // Encoding layers run once per neighbour; the feature projection once per point.
  return spec.k * (kEncodingWidth * hidden + hidden * hidden) + spec.in_dim * hidden + hidden * spec.out_dim;
}

std::size_t final_head_macs_per_point(std::size_t width, std::size_t classes, std::size_t width_mult) {
  return width * 64 * width_mult + 64 * width_mult * 32 * width_mult + 32 * width_mult * classes;
}

// ---- forward -----------------------------------------------------------------

Tensor dense_forward(const Tensor& x, DenseLayer& layer, bool training) {
  return relu(batch_norm(linear(x, layer.weight, layer.bias), layer.bn, training));
}

Tensor initial_embedding(const Tensor& features, DenseLayer& params, bool training) {
  if (features.rank() != 2 || (features.dim(1) != 3 && features.dim(1) != 6)) {
    throw ConfigError("initial embedding takes n×3 or n×6 features, got " + shape_string(features.shape()));
  }
  check_width(features, params.in_dim(), "initial_embedding");
  return dense_forward(features, params, training);
}

Tensor shared_mlp_block(const Tensor& x, BlockParams& params, bool training) {
  check_width(x, params.spec.in_dim, "shared_mlp_block");
  Tensor h = x;
  for (DenseLayer& layer : params.layers) h = dense_forward(h, layer, training);
  return h;
}

Tensor relative_position_encoding(std::span<const Point3> coords, const KnnTable& knn) {
  const std::size_t n = coords.size(), k = knn.k;
  std::vector<double> values;
  values.reserve(n * k * kEncodingWidth);
  for (std::size_t p = 0; p < n; ++p) {
    const Point3& a = coords[p];
    for (const std::size_t q : knn.row(p)) {
      const Point3& b = coords[q];
      const Point3 d{a[0] - b[0], a[1] - b[1], a[2] - b[2]};
      values.insert(values.end(), {a[0], a[1], a[2], b[0], b[1], b[2], d[0], d[1], d[2],
                                   std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])});
    }
  }
  return Tensor({n * k, kEncodingWidth}, std::move(values));
}

Tensor local_agg_block(const Tensor& x, std::span<const Point3> coords, const KnnTable& knn,
                       BlockParams& params, bool training) {
  check_width(x, params.spec.in_dim, "local_agg_block");
  const std::size_t n = x.dim(0), k = knn.k;
  if (coords.size() != n || knn.rows() != n) {
    throw DimensionError("local_agg_block: " + std::to_string(n) + " feature rows, " +
                         std::to_string(coords.size()) + " coordinates, " + std::to_string(knn.rows()) +
                         " neighbour lists");
  }
  if (k != params.spec.k) {
    throw DimensionError("local_agg_block: neighbour table has K=" + std::to_string(k) +
                         " but the block was built for K=" + std::to_string(params.spec.k));
  }
  const Tensor encoded = dense_forward(relative_position_encoding(coords, knn), params.layers[0], training);

  // linear([encoded | x[nbr]]) = encoded·W_enc + (x·W_feat)[nbr] + b: the feature
  // half is projected once per point rather than once per neighbour.
  DenseLayer& mix = params.layers[1];
  const std::size_t hidden = mix.out_dim();
  const Tensor pre = add(linear(encoded, mix.weight, mix.bias),
                         gather_rows(matmul(x, params.feature_weight), knn.indices));
  const Tensor mixed = relu(batch_norm(pre, mix.bn, training));
  const Tensor pooled = reduce(reshape(mixed, {n, k, hidden}), Reduce::Max, 1);
  return dense_forward(pooled, params.layers[2], training);
}

Tensor decoder_head(const Tensor& x, const LinearLayer& params) {
  check_width(x, params.in_dim(), "decoder_head");
  return linear(x, params.weight, params.bias);
}

Tensor final_head(const Tensor& x, FinalHeadParams& params, bool training, std::uint64_t seed) {
  check_width(x, params.fc1.in_dim(), "final_head");
  Tensor h = dense_forward(x, params.fc1, training);
  h = dense_forward(h, params.fc2, training);
  h = dropout(h, kFinalDropout, training, seed);
  return linear(h, params.classifier.weight, params.classifier.bias);
}

// ---- visitation --------------------------------------------------------------

void visit(DenseLayer& layer, const std::string& prefix, const ParamVisitor& v) {
  if (v.on_param) {
    v.on_param(prefix + ".weight", layer.weight);
    v.on_param(prefix + ".bias", layer.bias);
    v.on_param(prefix + ".bn.gamma", layer.bn.gamma);
    v.on_param(prefix + ".bn.beta", layer.bn.beta);
  }
  if (v.on_buffer) {
    v.on_buffer(prefix + ".bn.running_mean", layer.bn.running_mean);
    v.on_buffer(prefix + ".bn.running_var", layer.bn.running_var);
    v.on_buffer(prefix + ".bn.updates", layer.bn.updates);
  }
}

void visit(LinearLayer& layer, const std::string& prefix, const ParamVisitor& v) {
  if (v.on_param) {
    v.on_param(prefix + ".weight", layer.weight);
    v.on_param(prefix + ".bias", layer.bias);
  }
}

void visit(BlockParams& block, const std::string& prefix, const ParamVisitor& v) {
  for (std::size_t l = 0; l < block.layers.size(); ++l) {
    visit(block.layers[l], prefix + ".layer" + std::to_string(l), v);
  }
  if (block.spec.kind == BlockKind::LocalAgg && v.on_param) {
    v.on_param(prefix + ".layer1.feature_weight", block.feature_weight);
  }
}

void visit(FinalHeadParams& head, const std::string& prefix, const ParamVisitor& v) {
  visit(head.fc1, prefix + ".fc1", v);
  visit(head.fc2, prefix + ".fc2", v);
  visit(head.classifier, prefix + ".classifier", v);
}

}  // namespace codecforge
