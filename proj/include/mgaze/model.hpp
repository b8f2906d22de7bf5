#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgaze/tensor.hpp"

namespace mgaze {

struct Affine {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

// x * W + 1 * b, composed from matmul/add so the bias never broadcasts.
Tensor affine(const Tensor& x, const Affine& layer);

struct ModelDims {
  std::size_t input_dim = 16;
  // Widths of the tanh layers; the last one is the feature width.
  std::vector<std::size_t> backbone_widths = {64, 64, 32};
  // Widths of the projection head; tanh between layers, none after the last.
  std::vector<std::size_t> projection_widths = {32, 16};

  bool operator==(const ModelDims&) const = default;
};

// Feature extractor, pitch/yaw regressor and projection head.
struct ModelState {
  std::vector<Affine> backbone;
  Affine regressor;
  std::vector<Affine> projection;

  // Uniform(+-sqrt(1/fan_in)) weights and biases from a seeded stream.
  static ModelState init(const ModelDims& dims, std::uint64_t seed);

  ModelDims dims() const;
  std::size_t input_dim() const { return backbone.front().in_dim(); }
  std::size_t feature_dim() const { return backbone.back().out_dim(); }
  std::size_t projection_dim() const { return projection.back().out_dim(); }

  // Backbone then regressor then projection, weight before bias.
  std::vector<Tensor> parameters() const;
  std::vector<Tensor> backbone_regressor_parameters() const;
  std::vector<std::string> parameter_names() const;

  // Deep copy with independent storage.
  ModelState clone() const;
};

Tensor feature_extract(const Tensor& x, const ModelState& state);
Tensor regress(const Tensor& features, const ModelState& state);
// Norm(MLP(f)): rows on the unit hypersphere.
Tensor project(const Tensor& features, const ModelState& state);
// Projection head output before normalization.
Tensor project_raw(const Tensor& features, const ModelState& state);

struct PrototypeBank {
  Tensor mu;  // K x D_z, unit rows, never requires grad
  double alpha = 0.95;
  double tau = 0.1;

  // K standard-normal draws in D_z dimensions, each normalized.
  static PrototypeBank random(std::size_t k, std::size_t dim, std::uint64_t seed,
                              double alpha = 0.95, double tau = 0.1);

  std::size_t count() const { return mu.rows(); }
  std::size_t dim() const { return mu.cols(); }
  PrototypeBank clone() const { return {mu.clone(), alpha, tau}; }
};

// Softmax(z mu^T / tau) over prototypes. Plain values, outside the graph.
Tensor prototype_assign(const Tensor& z, const PrototypeBank& bank);

// mu_k <- normalize(alpha mu_k + (1 - alpha) sum_i r_ik z_i / sum_i r_ik).
// Prototypes without assignment mass are left alone.
void prototype_ema_update(PrototypeBank& bank, const Tensor& z, const Tensor& assignment);

// p = z mu^T with mu held constant.
Tensor manifold_embed(const Tensor& z, const PrototypeBank& bank);

}  // namespace mgaze
