#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mgaze/data.hpp"
#include "mgaze/tensor.hpp"
#include "mgaze/trainer.hpp"

namespace testing_support {

inline mgaze::Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return mgaze::Tensor::matrix(rows, cols, std::move(v), requires_grad);
}

// Entries bounded away from zero, random sign.
inline mgaze::Tensor away_from_zero(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                    bool requires_grad = false) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return mgaze::Tensor::matrix(rows, cols, std::move(v), requires_grad);
}

inline std::vector<double> grad_or_zero(const mgaze::Tensor& t) {
  if (!t.has_grad()) return std::vector<double>(t.numel(), 0.0);
  auto g = t.grad();
  return {g.begin(), g.end()};
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

inline mgaze::SyntheticDomainConfig small_domain(std::size_t n, std::uint64_t sample_seed = 11) {
  mgaze::SyntheticDomainConfig cfg;
  cfg.n_samples = n;
  cfg.sample_seed = sample_seed;
  return cfg;
}

// Small widths and batches so full training runs finish in well under a second.
inline mgaze::TrainConfig small_train_config() {
  mgaze::TrainConfig cfg;
  cfg.K = 4;
  cfg.batch_clean = 16;
  cfg.learning_rate = 3e-3;
  cfg.warmup_epochs = 1;
  cfg.max_epochs = 2;
  cfg.t_percent = 20.0;
  cfg.hidden_width = 16;
  cfg.feature_dim = 8;
  cfg.projection_hidden = 8;
  cfg.projection_dim = 4;
  return cfg;
}

}  // namespace testing_support
