#include "mgaze/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mgaze/errors.hpp"

namespace mgaze {

namespace {

using detail::Node;

constexpr double kCosineEps = 1e-12;

thread_local int no_grad_depth = 0;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(a.shape()));
  }
}

Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  const bool any = no_grad_depth == 0 &&
                   std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

template <typename F>
Tensor unary_elementwise(const Tensor& a, F forward, std::function<void(Node&)> fn) {
  std::vector<double> out(a.numel());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_result(a.shape(), std::move(out), {a}, std::move(fn));
}

}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](auto e) { return e == 0; })) {
    throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape()[0];
  if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str(shape()));
  return shape()[1];
}

double Tensor::item() const {
  if (numel() != 1) throw InvalidArgument("item() on tensor of shape " + shape_str(shape()));
  return node_->values[0];
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw InvalidArgument("requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->values = node_->values;
  node->grad = node_->grad;
  node->requires_grad = node_->requires_grad && is_leaf();
  return Tensor(std::move(node));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * m];
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result({n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * pb.values[p * m + j];
          pa.grad[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.values[i * k + p];
          for (std::size_t j = 0; j < m; ++j) pb.grad[p * m + j] += aip * g[i * m + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
  return make_result({m, n}, std::move(out), {a}, [n, m](Node& self) {
    Node& pa = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) pa.grad[i * m + j] += self.grad[j * n + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int s = 0; s < 2; ++s) {
      Node& p = *self.parents[s];
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "multiply");
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.values[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.values[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      a, [factor](double v) { return v * factor; },
      [factor](Node& self) {
        Node& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += factor * self.grad[i];
      });
}

Tensor mean_all(const Tensor& a) {
  auto av = a.values();
  const double n = static_cast<double>(av.size());
  const double mean = std::accumulate(av.begin(), av.end(), 0.0) / n;
  return make_result({1}, {mean}, {a}, [n](Node& self) {
    Node& pa = *self.parents[0];
    const double g = self.grad[0] / n;
    for (double& v : pa.grad) v += g;
  });
}

Tensor row_mean(const Tensor& a) {
  require_rank2(a, "row_mean");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n, 0.0);
  auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += av[i * m + j];
    out[i] = acc / static_cast<double>(m);
  }
  return make_result({n, 1}, std::move(out), {a}, [n, m](Node& self) {
    Node& pa = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad[i] / static_cast<double>(m);
      for (std::size_t j = 0; j < m; ++j) pa.grad[i * m + j] += g;
    }
  });
}

Tensor abs(const Tensor& a) {
  return unary_elementwise(
      a, [](double v) { return std::fabs(v); },
      [](Node& self) {
        Node& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double x = pa.values[i];
          const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
          pa.grad[i] += sign * self.grad[i];
        }
      });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary_elementwise(
      a, [](double v) { return std::log(v); },
      [](Node& self) {
        Node& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] / pa.values[i];
      });
}

Tensor exp(const Tensor& a) {
  return unary_elementwise(
      a, [](double v) { return std::exp(v); },
      [](Node& self) {
        Node& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += self.grad[i] * self.values[i];
      });
}

Tensor tanh(const Tensor& a) {
  return unary_elementwise(
      a, [](double v) { return std::tanh(v); },
      [](Node& self) {
        Node& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double y = self.values[i];
          pa.grad[i] += self.grad[i] * (1.0 - y * y);
        }
      });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, [](double v) { return v > 0.0 ? v : 0.0; },
      [](Node& self) {
        Node& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if (pa.values[i] > 0.0) pa.grad[i] += self.grad[i];
      });
}

Tensor row_softmax(const Tensor& a) {
  require_rank2(a, "row_softmax");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &av[i * m];
    const double mx = *std::max_element(row, row + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = std::exp(row[j] - mx);
      total += out[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= total;
  }
  return make_result({n, m}, std::move(out), {a}, [n, m](Node& self) {
    Node& pa = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * self.values[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        pa.grad[i * m + j] += self.values[i * m + j] * (self.grad[i * m + j] - dot);
    }
  });
}

Tensor row_l2_normalize(const Tensor& a) {
  require_rank2(a, "row_l2_normalize");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  std::vector<double> norms(n);
  auto av = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) sq += av[i * m + j] * av[i * m + j];
    if (sq == 0.0) {
      throw DegenerateInputError("row_l2_normalize: row " + std::to_string(i) + " is zero");
    }
    norms[i] = std::sqrt(sq);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = av[i * m + j] / norms[i];
  }
  return make_result({n, m}, std::move(out), {a}, [n, m, norms = std::move(norms)](Node& self) {
    Node& pa = *self.parents[0];
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * self.values[i * m + j];
      for (std::size_t j = 0; j < m; ++j) {
        pa.grad[i * m + j] += (self.grad[i * m + j] - self.values[i * m + j] * dot) / norms[i];
      }
    }
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_rank2(a, "cosine_similarity");
  require_rank2(b, "cosine_similarity");
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_similarity: widths differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  auto av = a.values();
  auto bv = b.values();
  auto row_norms = [d](std::span<const double> v, std::size_t rows) {
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += v[i * d + k] * v[i * d + k];
      out[i] = std::sqrt(sq);
    }
    return out;
  };
  std::vector<double> na = row_norms(av, n);
  std::vector<double> nb = row_norms(bv, m);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += av[i * d + k] * bv[j * d + k];
      // Rounding can overshoot by an ulp when the rows are parallel.
      out[i * m + j] = std::clamp(dot / (na[i] * nb[j] + kCosineEps), -1.0, 1.0);
    }
  }
  return make_result(
      {n, m}, std::move(out), {a, b},
      [n, m, d, na = std::move(na), nb = std::move(nb)](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double g = self.grad[i * m + j];
            if (g == 0.0) continue;
            const double denom = na[i] * nb[j] + kCosineEps;
            const double c = self.values[i * m + j];
            if (pa.requires_grad) {
              const double self_coef = na[i] > 0.0 ? c * nb[j] / (denom * na[i]) : 0.0;
              for (std::size_t k = 0; k < d; ++k) {
                pa.grad[i * d + k] +=
                    g * (pb.values[j * d + k] / denom - self_coef * pa.values[i * d + k]);
              }
            }
            if (pb.requires_grad) {
              const double self_coef = nb[j] > 0.0 ? c * na[i] / (denom * nb[j]) : 0.0;
              for (std::size_t k = 0; k < d; ++k) {
                pb.grad[j * d + k] +=
                    g * (pa.values[i * d + k] / denom - self_coef * pb.values[j * d + k]);
              }
            }
          }
        }
      });
}

Tensor cosine_similarity(const Tensor& a) { return cosine_similarity(a, a); }

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  for (const Tensor& t : parts) require_rank2(t, "concat_rows");
  const std::size_t m = parts[0].cols();
  std::size_t n = 0;
  bool any = false;
  for (const Tensor& t : parts) {
    if (t.cols() != m) throw ShapeError("concat_rows: column counts differ");
    n += t.rows();
    any = any || t.requires_grad();
  }
  any = any && no_grad_depth == 0;
  auto node = std::make_shared<Node>();
  node->shape = {n, m};
  node->values.reserve(n * m);
  for (const Tensor& t : parts) node->values.insert(node->values.end(), t.values().begin(), t.values().end());
  if (any) {
    node->requires_grad = true;
    for (const Tensor& t : parts) node->parents.push_back(t.node());
    node->backward_fn = [](Node& self) {
      std::size_t offset = 0;
      for (auto& parent : self.parents) {
        const std::size_t count = parent->values.size();
        if (parent->requires_grad) {
          for (std::size_t i = 0; i < count; ++i) parent->grad[i] += self.grad[offset + i];
        }
        offset += count;
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_rows(parts);
}

Tensor detach(const Tensor& a) { return Tensor(a.shape(), std::vector<double>(a.values().begin(), a.values().end())); }

std::string_view primitive_name(Primitive op) {
  switch (op) {
    case Primitive::kMatmul: return "matmul";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kAdd: return "add";
    case Primitive::kSubtract: return "subtract";
    case Primitive::kMultiply: return "multiply";
    case Primitive::kScale: return "scale";
    case Primitive::kMeanAll: return "mean_all";
    case Primitive::kRowMean: return "row_mean";
    case Primitive::kAbs: return "abs";
    case Primitive::kLog: return "log";
    case Primitive::kExp: return "exp";
    case Primitive::kRowSoftmax: return "row_softmax";
    case Primitive::kRowL2Normalize: return "row_l2_normalize";
    case Primitive::kCosineSimilarity: return "cosine_similarity";
    case Primitive::kTanh: return "tanh";
    case Primitive::kRelu: return "relu";
    case Primitive::kConcatRows: return "concat_rows";
    case Primitive::kDetach: return "detach";
  }
  return "unknown";
}

std::size_t primitive_arity(Primitive op) {
  switch (op) {
    case Primitive::kMatmul:
    case Primitive::kAdd:
    case Primitive::kSubtract:
    case Primitive::kMultiply:
    case Primitive::kCosineSimilarity:
    case Primitive::kConcatRows:
      return 2;
    default:
      return 1;
  }
}

Tensor apply_primitive(Primitive op, std::span<const Tensor> in, double scalar) {
  auto need = [&](std::size_t count) {
    if (in.size() != count) {
      throw InvalidArgument(std::string(primitive_name(op)) + ": expected " +
                            std::to_string(count) + " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (op) {
    case Primitive::kMatmul: need(2); return matmul(in[0], in[1]);
    case Primitive::kTranspose: need(1); return transpose(in[0]);
    case Primitive::kAdd: need(2); return add(in[0], in[1]);
    case Primitive::kSubtract: need(2); return subtract(in[0], in[1]);
    case Primitive::kMultiply: need(2); return multiply(in[0], in[1]);
    case Primitive::kScale: need(1); return scale(in[0], scalar);
    case Primitive::kMeanAll: need(1); return mean_all(in[0]);
    case Primitive::kRowMean: need(1); return row_mean(in[0]);
    case Primitive::kAbs: need(1); return abs(in[0]);
    case Primitive::kLog: need(1); return log(in[0]);
    case Primitive::kExp: need(1); return exp(in[0]);
    case Primitive::kRowSoftmax: need(1); return row_softmax(in[0]);
    case Primitive::kRowL2Normalize: need(1); return row_l2_normalize(in[0]);
    case Primitive::kCosineSimilarity:
      if (in.size() == 1) return cosine_similarity(in[0]);
      need(2);
      return cosine_similarity(in[0], in[1]);
    case Primitive::kTanh: need(1); return tanh(in[0]);
    case Primitive::kRelu: need(1); return relu(in[0]);
    case Primitive::kConcatRows: return concat_rows(in);
    case Primitive::kDetach: need(1); return detach(in[0]);
  }
  throw InvalidArgument("unknown primitive");
}

void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw InvalidArgument("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) node->grad.assign(node->values.size(), 0.0);
  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

double grad_check(const std::function<Tensor()>& scalar_fn, std::span<Tensor> params, double step) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be positive");
  auto evaluate = [&]() {
    const double v = scalar_fn().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  Tensor root = scalar_fn();
  if (!std::isfinite(root.item())) throw NumericError("grad_check: non-finite function value");
  // Parameters outside this graph would otherwise report gradients from an earlier pass.
  for (Tensor& p : params) p.zero_grad();
  backward(root);
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = evaluate();
      values[i] = saved - step;
      const double minus = evaluate();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[k][i];
      const double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      if (!std::isfinite(err)) throw NumericError("grad_check: non-finite derivative");
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mgaze
