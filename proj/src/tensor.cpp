#include "codecforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "codecforge/errors.hpp"

namespace codecforge {

namespace {

Precision g_precision = Precision::Single;
thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

void round_to_precision(std::vector<double>& values) {
  if (g_precision != Precision::Single) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}


// Builds the output node; the tape entry is recorded only if some parent
// participates in gradients.
// Arithmetic results are rounded to the active precision; pure data movement
// (concat, split, reshape, gather) passes values through untouched.
enum class Rounding { Apply, Skip };

Tensor make_result(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                   std::function<void(detail::Node&)> backward_fn,
                   Rounding rounding = Rounding::Apply) {
  if (rounding == Rounding::Apply) round_to_precision(values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  const bool track = t_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

// Grad buffer of a parent, or nullptr if that parent does not take gradients.
double* grad_buffer(const NodePtr& node) {
  if (!node->requires_grad) return nullptr;
  if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), 0.0);
  return node->grad.data();
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->shape = {};
  node_->data = {0.0};
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on non-scalar tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2 || r >= dim(0) || c >= dim(1)) {
    throw IndexError("at(" + std::to_string(r) + ", " + std::to_string(c) + ") on shape " +
                     shape_string(shape()));
  }
  return node_->data[r * dim(1) + c];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

BatchNormState BatchNormState::identity(std::size_t width) {
  BatchNormState s;
  s.gamma = Tensor::full({width}, 1.0);
  s.beta = Tensor::zeros({width});
  s.running_mean.assign(width, 0.0);
  s.running_var.assign(width, 1.0);
  return s;
}

// ---- matmul / linear -------------------------------------------------------

namespace {

void gemm_accumulate(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                     std::size_t n) {
  std::size_t i = 0;
  // Four output rows per pass share each load of b.
  for (; i + 4 <= m; i += 4) {
    double* o0 = out + i * n;
    double* o1 = o0 + n;
    double* o2 = o1 + n;
    double* o3 = o2 + n;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      if (v0 == 0.0 && v1 == 0.0 && v2 == 0.0 && v3 == 0.0) continue;
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = b_row[j];
        o0[j] += v0 * bv;
        o1[j] += v1 * bv;
        o2[j] += v2 * bv;
        o3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    double* out_row = out + i * n;
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      if (av == 0.0) continue;
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

// Accumulates grads of out = a·b into a and b given upstream g[m×n].
void gemm_backward(const NodePtr& a, const NodePtr& b, const double* g, std::size_t m,
                   std::size_t k, std::size_t n) {
  if (double* ga = grad_buffer(a)) {
    const double* bd = b->data.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* g_row = g + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double* b_row = bd + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g_row[j] * b_row[j];
        ga[i * k + p] += acc;
      }
    }
  }
  if (double* gb = grad_buffer(b)) {
    const double* ad = a->data.data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* g_row = g + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ad[i * k + p];
        if (av == 0.0) continue;
        double* gb_row = gb + p * n;
        for (std::size_t j = 0; j < n; ++j) gb_row[j] += av * g_row[j];
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_accumulate(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](detail::Node& self) {
                       gemm_backward(self.parents[0], self.parents[1], self.grad.data(), m, k, n);
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k || b.size() != n) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(w.shape()) + " and bias " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  const auto bias = b.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bias.begin(), bias.end(), out.begin() + i * n);
  gemm_accumulate(x.data().data(), w.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {x.node(), w.node(), b.node()},
                     [m, k, n](detail::Node& self) {
                       gemm_backward(self.parents[0], self.parents[1], self.grad.data(), m, k, n);
                       if (double* gb = grad_buffer(self.parents[2])) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                       }
                     });
}

// ---- elementwise -------------------------------------------------------------

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  const bool both_scalar = a.size() == 1 && b.size() == 1;
  if (!a_scalar && !b_scalar && !both_scalar && a.shape() != b.shape()) {
    throw DimensionError("elementwise: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto ad = a.data();
  const auto bd = b.data();
  auto ai = [a_scalar](std::size_t i) { return a_scalar ? 0 : i; };
  auto bi = [b_scalar](std::size_t i) { return b_scalar ? 0 : i; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[ai(i)], y = bd[bi(i)];
    switch (op) {
      case Elementwise::Add: out[i] = x + y; break;
      case Elementwise::Sub: out[i] = x - y; break;
      case Elementwise::Mul: out[i] = x * y; break;
      default: throw ConfigError("elementwise: unary op given two operands");
    }
  }
  return make_result(shape, std::move(out), {a.node(), b.node()},
                     [op, a_scalar, b_scalar, n](detail::Node& self) {
                       const NodePtr& pa = self.parents[0];
                       const NodePtr& pb = self.parents[1];
                       double* ga = grad_buffer(pa);
                       double* gb = grad_buffer(pb);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double g = self.grad[i];
                         const std::size_t ia = a_scalar ? 0 : i, ib = b_scalar ? 0 : i;
                         switch (op) {
                           case Elementwise::Add:
                             if (ga) ga[ia] += g;
                             if (gb) gb[ib] += g;
                             break;
                           case Elementwise::Sub:
                             if (ga) ga[ia] += g;
                             if (gb) gb[ib] -= g;
                             break;
                           case Elementwise::Mul:
                             if (ga) ga[ia] += g * pb->data[ib];
                             if (gb) gb[ib] += g * pa->data[ia];
                             break;
                           default: break;
                         }
                       }
                     });
}

Tensor elementwise(Elementwise op, const Tensor& a) {
  const std::size_t n = a.size();
  const auto ad = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case Elementwise::Relu: out[i] = ad[i] > 0.0 ? ad[i] : 0.0; break;
      case Elementwise::Log: out[i] = std::log(std::max(ad[i], kLogEpsilon)); break;
      case Elementwise::Exp: out[i] = std::exp(ad[i]); break;
      default: throw ConfigError("elementwise: binary op given one operand");
    }
  }
  return make_result(a.shape(), std::move(out), {a.node()}, [op, n](detail::Node& self) {
    const NodePtr& pa = self.parents[0];
    double* ga = grad_buffer(pa);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pa->data[i], g = self.grad[i];
      switch (op) {
        case Elementwise::Relu: ga[i] += x > 0.0 ? g : 0.0; break;
        case Elementwise::Log: ga[i] += x >= kLogEpsilon ? g / x : 0.0; break;
        case Elementwise::Exp: ga[i] += g * self.data[i]; break;
        default: break;
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::Mul, a, b); }
Tensor relu(const Tensor& t) { return elementwise(Elementwise::Relu, t); }
Tensor log(const Tensor& t) { return elementwise(Elementwise::Log, t); }
Tensor exp(const Tensor& t) { return elementwise(Elementwise::Exp, t); }
Tensor scale(const Tensor& t, double factor) { return mul(t, Tensor::scalar(factor)); }

// ---- shape ops ---------------------------------------------------------------

Tensor concat(std::span<const Tensor> tensors, std::size_t axis) {
  if (tensors.empty()) throw DimensionError("concat: empty tensor list");
  const Shape& first = tensors[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(first));
  }
  if (tensors.size() == 1) return tensors[0];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Tensor& t : tensors) {
    Shape probe = t.shape();
    if (probe.size() != first.size()) {
      throw DimensionError("concat: ragged shapes " + shape_string(first) + " and " +
                           shape_string(probe));
    }
    extents.push_back(probe[axis]);
    probe[axis] = first[axis];
    if (probe != first) {
      throw DimensionError("concat: ragged shapes " + shape_string(first) + " and " +
                           shape_string(t.shape()));
    }
    out_shape[axis] += t.dim(axis);
  }
  const AxisSplit out_split = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const auto src = tensors[t].data();
    const std::size_t block = extents[t] * out_split.inner;
    for (std::size_t o = 0; o < out_split.outer; ++o) {
      std::copy_n(src.begin() + o * block, block,
                  out.begin() + o * out_split.extent * out_split.inner + offset * out_split.inner);
    }
    offset += extents[t];
  }
  std::vector<NodePtr> parents;
  for (const Tensor& t : tensors) parents.push_back(t.node());
  return make_result(out_shape, std::move(out), std::move(parents),
                     [extents, out_split](detail::Node& self) {
                       std::size_t off = 0;
                       for (std::size_t t = 0; t < extents.size(); ++t) {
                         const std::size_t block = extents[t] * out_split.inner;
                         if (double* g = grad_buffer(self.parents[t])) {
                           for (std::size_t o = 0; o < out_split.outer; ++o) {
                             const double* src = self.grad.data() +
                                                 o * out_split.extent * out_split.inner +
                                                 off * out_split.inner;
                             for (std::size_t e = 0; e < block; ++e) g[o * block + e] += src[e];
                           }
                         }
                         off += extents[t];
                       }
                     },
                     Rounding::Skip);
}

Tensor concat(std::initializer_list<Tensor> tensors, std::size_t axis) {
  return concat(std::span<const Tensor>(tensors.begin(), tensors.size()), axis);
}

std::vector<Tensor> split(const Tensor& t, std::span<const std::size_t> extents, std::size_t axis) {
  if (axis >= t.rank()) throw DimensionError("split: axis out of range");
  const std::size_t total = std::accumulate(extents.begin(), extents.end(), std::size_t{0});
  if (total != t.dim(axis)) {
    throw DimensionError("split: extents sum to " + std::to_string(total) + " but axis has " +
                         std::to_string(t.dim(axis)));
  }
  const AxisSplit in_split = split_axis(t.shape(), axis);
  std::vector<Tensor> parts;
  std::size_t offset = 0;
  for (const std::size_t extent : extents) {
    Shape shape = t.shape();
    shape[axis] = extent;
    const std::size_t block = extent * in_split.inner;
    std::vector<double> out(in_split.outer * block);
    const auto src = t.data();
    for (std::size_t o = 0; o < in_split.outer; ++o) {
      std::copy_n(src.begin() + o * in_split.extent * in_split.inner + offset * in_split.inner,
                  block, out.begin() + o * block);
    }
    parts.push_back(make_result(shape, std::move(out), {t.node()},
                                [in_split, offset, block](detail::Node& self) {
                                  double* g = grad_buffer(self.parents[0]);
                                  for (std::size_t o = 0; o < in_split.outer; ++o) {
                                    double* dst = g + o * in_split.extent * in_split.inner +
                                                  offset * in_split.inner;
                                    for (std::size_t e = 0; e < block; ++e)
                                      dst[e] += self.grad[o * block + e];
                                  }
                                },
                                Rounding::Skip));
    offset += extent;
  }
  return parts;
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.size()) {
    throw DimensionError("reshape: " + shape_string(t.shape()) + " cannot become " +
                         shape_string(shape));
  }
  return make_result(std::move(shape), t.values(), {t.node()}, [](detail::Node& self) {
    double* g = grad_buffer(self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  }, Rounding::Skip);
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  if (t.rank() == 0) throw DimensionError("gather_rows on a scalar");
  const std::size_t n = t.dim(0);
  const std::size_t width = n ? t.size() / n : 0;
  for (const std::size_t i : idx) {
    if (i >= n) {
      throw IndexError("gather_rows: index " + std::to_string(i) + " out of range for " +
                       std::to_string(n) + " rows");
    }
  }
  Shape shape = t.shape();
  shape[0] = idx.size();
  std::vector<double> out(idx.size() * width);
  const auto src = t.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(src.begin() + idx[r] * width, width, out.begin() + r * width);
  }
  std::vector<std::size_t> index(idx.begin(), idx.end());
  return make_result(std::move(shape), std::move(out), {t.node()},
                     [index = std::move(index), width](detail::Node& self) {
                       double* g = grad_buffer(self.parents[0]);
                       for (std::size_t r = 0; r < index.size(); ++r) {
                         double* dst = g + index[r] * width;
                         const double* src = self.grad.data() + r * width;
                         for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
                       }
                     },
                     Rounding::Skip);
}

// ---- reductions --------------------------------------------------------------

Tensor reduce(const Tensor& t, Reduce op, std::size_t axis) {
  if (axis >= t.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " invalid for " +
                         shape_string(t.shape()));
  }
  const AxisSplit s = split_axis(t.shape(), axis);
  if (s.extent == 0) throw EmptyReductionError("reduce over empty axis " + std::to_string(axis));
  Shape shape = t.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto src = t.data();
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> winner;
  if (op == Reduce::Max) winner.resize(out.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double acc = src[base];
      std::size_t best = 0;
      for (std::size_t e = 1; e < s.extent; ++e) {
        const double v = src[base + e * s.inner];
        if (op == Reduce::Max) {
          if (v > acc) {
            acc = v;
            best = e;
          }
        } else {
          acc += v;
        }
      }
      if (op == Reduce::Mean) acc /= static_cast<double>(s.extent);
      out[o * s.inner + in] = acc;
      if (op == Reduce::Max) winner[o * s.inner + in] = best;
    }
  }
  return make_result(std::move(shape), std::move(out), {t.node()},
                     [op, s, winner = std::move(winner)](detail::Node& self) {
                       double* g = grad_buffer(self.parents[0]);
                       const double inv = 1.0 / static_cast<double>(s.extent);
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t in = 0; in < s.inner; ++in) {
                           const std::size_t r = o * s.inner + in;
                           const std::size_t base = o * s.extent * s.inner + in;
                           const double up = self.grad[r];
                           if (op == Reduce::Max) {
                             g[base + winner[r] * s.inner] += up;
                           } else {
                             const double v = op == Reduce::Mean ? up * inv : up;
                             for (std::size_t e = 0; e < s.extent; ++e) g[base + e * s.inner] += v;
                           }
                         }
                       }
                     });
}

Tensor sum_all(const Tensor& t) {
  double acc = 0.0;
  for (const double v : t.data()) acc += v;
  return make_result({}, {acc}, {t.node()}, [](detail::Node& self) {
    double* g = grad_buffer(self.parents[0]);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean_all(const Tensor& t) {
  if (t.size() == 0) throw EmptyReductionError("mean of an empty tensor");
  return scale(sum_all(t), 1.0 / static_cast<double>(t.size()));
}

// ---- classification ----------------------------------------------------------

std::vector<double> softmax_rows(const Tensor& logits) {
  require_matrix(logits, "softmax_rows");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const auto x = logits.data();
  std::vector<double> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * c;
    const double m = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) total += (out[r * c + k] = std::exp(row[k] - m));
    for (std::size_t k = 0; k < c; ++k) out[r * c + k] /= total;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  require_matrix(logits, "argmax_rows");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const auto x = logits.data();
  std::vector<std::size_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * c;
    out[r] = static_cast<std::size_t>(std::max_element(row, row + c) - row);
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_matrix(logits, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(n) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (n == 0) throw EmptyReductionError("softmax_cross_entropy over zero rows");
  for (const std::size_t y : labels) {
    if (y >= c) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(y) + " >= class count " +
                       std::to_string(c));
    }
  }
  std::vector<double> probs = softmax_rows(logits);
  const auto x = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * c;
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::exp(row[k] - m);
    total += m + std::log(s) - row[labels[r]];
  }
  std::vector<std::size_t> target(labels.begin(), labels.end());
  return make_result({}, {total / static_cast<double>(n)}, {logits.node()},
                     [probs = std::move(probs), target = std::move(target), n, c](detail::Node& self) {
                       double* g = grad_buffer(self.parents[0]);
                       const double up = self.grad[0] / static_cast<double>(n);
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t k = 0; k < c; ++k) {
                           const double onehot = k == target[r] ? 1.0 : 0.0;
                           g[r * c + k] += up * (probs[r * c + k] - onehot);
                         }
                       }
                     });
}

Tensor dropout(const Tensor& t, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return t;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(t.size());
  for (double& m : mask) m = uniform(rng) < rate ? 0.0 : keep_scale;
  std::vector<double> out(t.size());
  const auto src = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] * mask[i];
  return make_result(t.shape(), std::move(out), {t.node()},
                     [mask = std::move(mask)](detail::Node& self) {
                       double* g = grad_buffer(self.parents[0]);
                       for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
                     });
}

Tensor batch_norm(const Tensor& t, BatchNormState& state, bool training) {
  require_matrix(t, "batch_norm");
  const std::size_t n = t.dim(0), d = t.dim(1);
  if (state.width() != d) {
    throw DimensionError("batch_norm: input " + shape_string(t.shape()) + " vs " +
                         std::to_string(state.width()) + " normalized features");
  }
  if (training && n < 2) {
    throw BatchSizeError("batch_norm in training mode needs at least 2 rows, got " +
                         std::to_string(n));
  }
  const auto x = t.data();
  const auto gamma = state.gamma.data();
  const auto beta = state.beta.data();
  std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
  if (training) {
    std::vector<double> var(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mean[c] += x[r * d + c];
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        const double dv = x[r * d + c] - mean[c];
        var[c] += dv * dv;
      }
    if (state.updates.empty()) state.updates.assign(1, 0.0);
    state.updates[0] += 1.0;
    const double w = std::max(1.0 - kBatchNormMomentum, 1.0 / state.updates[0]);
    for (std::size_t c = 0; c < d; ++c) {
      var[c] /= static_cast<double>(n);
      inv_std[c] = 1.0 / std::sqrt(var[c] + kBatchNormEpsilon);
      const double unbiased = var[c] * static_cast<double>(n) / static_cast<double>(n - 1);
      state.running_mean[c] = (1.0 - w) * state.running_mean[c] + w * mean[c];
      state.running_var[c] = (1.0 - w) * state.running_var[c] + w * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + kBatchNormEpsilon);
    }
  }
  std::vector<double> xhat(n * d), out(n * d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t i = r * d + c;
      xhat[i] = (x[i] - mean[c]) * inv_std[c];
      out[i] = gamma[c] * xhat[i] + beta[c];
    }
  return make_result(
      {n, d}, std::move(out), {t.node(), state.gamma.node(), state.beta.node()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), n, d, training](detail::Node& self) {
        const auto& gamma_data = self.parents[1]->data;
        const double* g = self.grad.data();
        if (double* gg = grad_buffer(self.parents[1])) {
          for (std::size_t i = 0; i < n * d; ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (double* gb = grad_buffer(self.parents[2])) {
          for (std::size_t i = 0; i < n * d; ++i) gb[i % d] += g[i];
        }
        double* gx = grad_buffer(self.parents[0]);
        if (!gx) return;
        if (!training) {
          for (std::size_t i = 0; i < n * d; ++i) gx[i] += g[i] * gamma_data[i % d] * inv_std[i % d];
          return;
        }
        std::vector<double> sum_dxhat(d, 0.0), sum_dxhat_xhat(d, 0.0);
        for (std::size_t i = 0; i < n * d; ++i) {
          const double dxhat = g[i] * gamma_data[i % d];
          sum_dxhat[i % d] += dxhat;
          sum_dxhat_xhat[i % d] += dxhat * xhat[i];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n * d; ++i) {
          const std::size_t c = i % d;
          const double dxhat = g[i] * gamma_data[c];
          gx[i] += inv_n * inv_std[c] *
                   (static_cast<double>(n) * dxhat - sum_dxhat[c] - xhat[i] * sum_dxhat_xhat[c]);
        }
      });
}

// ---- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  const NodePtr& root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; `order` ends up with every input before its consumer.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (!node->is_leaf()) {
      node->grad.assign(node->data.size(), 0.0);
    } else if (node->grad.size() != node->data.size()) {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

// ---- gradient checking -------------------------------------------------------

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  std::vector<Tensor> params{leaf};
  return grad_check([&] { return f(leaf); }, params, h);
}

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double h) {
  for (Tensor& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace codecforge
