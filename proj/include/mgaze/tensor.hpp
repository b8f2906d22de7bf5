#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace mgaze {

using Shape = std::vector<std::size_t>;

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require grad.
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

// Dense row-major array of doubles taking part in a reverse-mode graph.
//
// A Tensor is a handle: copies share the same storage and graph node, the
// same way parameters are shared between a model and its optimizer. Use
// clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  // Rank-2 extents. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->values; }
  // In-place access for optimizers and initializers. Does not touch the graph.
  std::span<double> mutable_values() { return node_->values; }
  double at(std::size_t r, std::size_t c) const { return node_->values[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty until backward() has reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();
  bool is_leaf() const { return node_->parents.empty(); }

  Tensor clone() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by primitives and backward().
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// While alive on a thread, primitives on that thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Primitives. Shapes must match exactly; there is no broadcasting except in
// scale(). Every primitive records a backward node when an input requires grad.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor mean_all(const Tensor& a);
// n x m -> n x 1 row means.
Tensor row_mean(const Tensor& a);
// Subgradient 0 at the kink.
Tensor abs(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor row_softmax(const Tensor& a);
Tensor row_l2_normalize(const Tensor& a);
// n x d, m x d -> n x m matrix of row cosines. Denominators carry +1e-12.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
Tensor cosine_similarity(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_rows(const Tensor& a, const Tensor& b);
// Copy of the values with no link back into the graph.
Tensor detach(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return subtract(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return multiply(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

enum class Primitive {
  kMatmul,
  kTranspose,
  kAdd,
  kSubtract,
  kMultiply,
  kScale,
  kMeanAll,
  kRowMean,
  kAbs,
  kLog,
  kExp,
  kRowSoftmax,
  kRowL2Normalize,
  kCosineSimilarity,
  kTanh,
  kRelu,
  kConcatRows,
  kDetach,
};

std::string_view primitive_name(Primitive op);
std::size_t primitive_arity(Primitive op);

// Uniform dispatch over the primitive set. `scalar` is only read by kScale.
// kCosineSimilarity accepts one or two inputs; kConcatRows any number >= 1.
Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs, double scalar = 1.0);

// Fills the grad of every tensor reachable from `root` that requires grad.
// Gradients from the previous backward() over the same nodes are discarded,
// so after the call each leaf holds exactly d(root)/d(leaf).
void backward(const Tensor& root);

// Max over every parameter entry of |analytic - numeric| / max(1e-8, |analytic| + |numeric|),
// with the numeric derivative taken by central differences of width 2*step.
double grad_check(const std::function<Tensor()>& scalar_fn, std::span<Tensor> params, double step);

}  // namespace mgaze
