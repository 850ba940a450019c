#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace codecforge {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Storage is always double. In Single mode every forward result is rounded
// through float, so values behave like single-precision data while the
// gradient checks can switch the whole engine to Double.
enum class Precision { Single, Double };

Precision precision();
void set_precision(Precision p);

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

// While alive on a thread, ops do not record onto the tape.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

bool grad_enabled();

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
};

}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Only meaningful for leaves (parameters, inputs); mutating an interior
  // tensor does not invalidate recorded backward closures.
  std::span<double> mutable_data() { return node_->data; }
  std::vector<double> values() const { return node_->data; }

  double item() const;
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  // A leaf sharing nothing with this tensor's tape.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- primitive ops ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

enum class Elementwise { Add, Sub, Mul, Relu, Log, Exp };

// Binary ops accept equal shapes or a scalar on either side.
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b);
Tensor elementwise(Elementwise op, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& t);
Tensor log(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor scale(const Tensor& t, double factor);

// x[n×k]·w[k×m] + b[m], bias broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor concat(std::span<const Tensor> tensors, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> tensors, std::size_t axis);
std::vector<Tensor> split(const Tensor& t, std::span<const std::size_t> extents, std::size_t axis);

Tensor reshape(const Tensor& t, Shape shape);
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx);

enum class Reduce { Max, Mean, Sum };
Tensor reduce(const Tensor& t, Reduce op, std::size_t axis);
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);

// Row-wise softmax of an n×C matrix (no tape; used for predictions).
std::vector<double> softmax_rows(const Tensor& logits);
std::vector<std::size_t> argmax_rows(const Tensor& logits);

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

Tensor dropout(const Tensor& t, double rate, bool training, std::uint64_t seed);

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  // Training batches folded into the running statistics (one element, so it
  // travels with the other buffers).
  std::vector<double> updates{0.0};

  static BatchNormState identity(std::size_t width);
  std::size_t width() const { return gamma.size(); }
};

inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kLogEpsilon = 1e-12;

// Per-column normalization of t[n×d]. Training mode uses batch statistics and
// folds them into the running averages with weight max(1 - momentum, 1/t) for
// the t-th batch: a plain mean over the first batches, then the momentum
// average. Eval mode uses the running averages.
Tensor batch_norm(const Tensor& t, BatchNormState& state, bool training);

// Populates grad on every requires_grad tensor reachable from loss.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |central difference| + 1e-12).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double h);

}  // namespace codecforge
