#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mgaze/data.hpp"
#include "mgaze/model.hpp"
#include "mgaze/tensor.hpp"

namespace mgaze {

// B x B cosine affinity of the rows of v. Differentiable.
Tensor affinity_square(const Tensor& v);
// B_N x B_C cosine affinity between two row sets. Differentiable in both.
Tensor affinity_cross(const Tensor& noisy_rows, const Tensor& clean_rows);

// eta_i = -sum_j softmax(A_g)_ij log softmax(A_m)_ij, computed on plain values.
// With include_diagonal = false the j = i term is dropped from both softmaxes.
std::vector<double> noise_indicator(const Tensor& manifold_affinity, const Tensor& label_affinity,
                                    bool include_diagonal = true);

// Scores every sample by eta. Indices are shuffled with `seed` and cut into
// consecutive chunks of `batch_size`; a tail shorter than 2 joins the
// previous chunk. Result is aligned to the original sample order.
std::vector<double> score_dataset(const Dataset& dataset, const ModelState& model,
                                  const PrototypeBank& bank, std::size_t batch_size,
                                  std::uint64_t seed, bool include_diagonal = true);

// Per-sample mean |g(x) - y_obs| over pitch and yaw (small-loss indicator).
std::vector<double> score_l1(const Dataset& dataset, const ModelState& model);

struct PartitionState {
  std::vector<double> eta;
  std::vector<std::size_t> clean_indices;  // ascending
  std::vector<std::size_t> noisy_indices;  // ascending
  double t_percent = 0.0;
  int epoch_of_scoring = 0;

  std::size_t size() const { return eta.size(); }
  std::vector<bool> noisy_mask() const;
};

// Number of samples flagged at t_percent over n samples.
std::size_t noisy_count(double t_percent, std::size_t n);

// Top round(t% * N) eta values form the noisy subset; ties go to the lower index.
PartitionState partition(std::span<const double> eta, double t_percent, int epoch = 0);

}  // namespace mgaze
