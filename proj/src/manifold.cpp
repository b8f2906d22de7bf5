#include "mgaze/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "mgaze/errors.hpp"

namespace mgaze {

namespace {

void require_nonzero_rows(const Tensor& v, const char* what) {
  if (v.rank() != 2) throw ShapeError(std::string(what) + ": expected a matrix");
  const std::size_t n = v.rows(), d = v.cols();
  auto vals = v.values();
  for (std::size_t i = 0; i < n; ++i) {
    bool zero = true;
    for (std::size_t k = 0; k < d && zero; ++k) zero = vals[i * d + k] == 0.0;
    if (zero) throw DegenerateInputError(std::string(what) + ": row " + std::to_string(i) + " is zero");
  }
}

// Row-wise log-softmax over the allowed entries of a square matrix.
std::vector<double> log_softmax_rows(std::span<const double> a, std::size_t b, bool include_diagonal) {
  std::vector<double> out(b * b, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < b; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j) {
      if (include_diagonal || i != j) mx = std::max(mx, a[i * b + j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (include_diagonal || i != j) total += std::exp(a[i * b + j] - mx);
    }
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < b; ++j) {
      if (include_diagonal || i != j) out[i * b + j] = a[i * b + j] - lse;
    }
  }
  return out;
}

}  // namespace

Tensor affinity_square(const Tensor& v) {
  require_nonzero_rows(v, "affinity_square");
  if (v.rows() < 2) throw InvalidArgument("affinity_square: need at least 2 rows");
  return cosine_similarity(v);
}

Tensor affinity_cross(const Tensor& noisy_rows, const Tensor& clean_rows) {
  require_nonzero_rows(noisy_rows, "affinity_cross");
  require_nonzero_rows(clean_rows, "affinity_cross");
  return cosine_similarity(noisy_rows, clean_rows);
}

std::vector<double> noise_indicator(const Tensor& manifold_affinity, const Tensor& label_affinity,
                                    bool include_diagonal) {
  if (manifold_affinity.rank() != 2 || manifold_affinity.shape() != label_affinity.shape() ||
      manifold_affinity.rows() != manifold_affinity.cols()) {
    throw ShapeError("noise_indicator: affinities must be square with equal shapes");
  }
  const std::size_t b = manifold_affinity.rows();
  if (b < 2) throw ShapeError("noise_indicator: need at least 2 samples");
  const auto log_m = log_softmax_rows(manifold_affinity.values(), b, include_diagonal);
  const auto log_g = log_softmax_rows(label_affinity.values(), b, include_diagonal);
  std::vector<double> eta(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (!include_diagonal && i == j) continue;
      acc -= std::exp(log_g[i * b + j]) * log_m[i * b + j];
    }
    eta[i] = acc;
  }
  return eta;
}

std::vector<double> score_dataset(const Dataset& dataset, const ModelState& model,
                                  const PrototypeBank& bank, std::size_t batch_size,
                                  std::uint64_t seed, bool include_diagonal) {
  const std::size_t n = dataset.size();
  if (n < 2) throw InvalidArgument("score_dataset: need at least 2 samples");
  if (batch_size < 2) throw InvalidArgument("score_dataset: batch size must be at least 2");

  std::vector<std::size_t> order = iota_indices(n);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t start = 0; start < n; start += batch_size) {
    chunks.emplace_back(start, std::min(n, start + batch_size));
  }
  if (chunks.size() > 1 && chunks.back().second - chunks.back().first < 2) {
    chunks[chunks.size() - 2].second = chunks.back().second;
    chunks.pop_back();
  }

  NoGradGuard no_grad;
  std::vector<double> eta(n, 0.0);
  for (const auto& [begin, end] : chunks) {
    std::span<const std::size_t> idx(order.data() + begin, end - begin);
    const Tensor z = project(feature_extract(dataset.inputs(idx), model), model);
    const Tensor am = affinity_square(manifold_embed(z, bank));
    const Tensor ag = affinity_square(dataset.label_vectors(idx));
    const auto chunk_eta = noise_indicator(am, ag, include_diagonal);
    for (std::size_t i = 0; i < idx.size(); ++i) eta[idx[i]] = chunk_eta[i];
  }
  return eta;
}

std::vector<double> score_l1(const Dataset& dataset, const ModelState& model) {
  if (dataset.empty()) throw InvalidArgument("score_l1: empty dataset");
  NoGradGuard no_grad;
  const auto idx = iota_indices(dataset.size());
  const Tensor pred = regress(feature_extract(dataset.inputs(idx), model), model);
  auto p = pred.values();
  std::vector<double> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& y = dataset.samples[i].y_obs;
    out[i] = 0.5 * (std::fabs(p[2 * i] - y.pitch) + std::fabs(p[2 * i + 1] - y.yaw));
  }
  return out;
}

std::vector<bool> PartitionState::noisy_mask() const {
  std::vector<bool> mask(eta.size(), false);
  for (std::size_t i : noisy_indices) mask[i] = true;
  return mask;
}

std::size_t noisy_count(double t_percent, std::size_t n) {
  return static_cast<std::size_t>(std::llround(t_percent * static_cast<double>(n) / 100.0));
}

PartitionState partition(std::span<const double> eta, double t_percent, int epoch) {
  if (!(t_percent >= 0.0 && t_percent < 100.0)) {
    throw ConfigError("t_percent must lie in [0, 100), got " + std::to_string(t_percent));
  }
  const std::size_t n = eta.size();
  if (n < 2) throw InvalidArgument("partition: need at least 2 samples");
  if (!std::all_of(eta.begin(), eta.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericError("partition: non-finite eta score");
  }

  std::vector<std::size_t> order = iota_indices(n);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return eta[a] > eta[b]; });
  const std::size_t count = noisy_count(t_percent, n);

  PartitionState out;
  out.eta.assign(eta.begin(), eta.end());
  out.t_percent = t_percent;
  out.epoch_of_scoring = epoch;
  out.noisy_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  out.clean_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  std::sort(out.noisy_indices.begin(), out.noisy_indices.end());
  std::sort(out.clean_indices.begin(), out.clean_indices.end());
  return out;
}

}  // namespace mgaze
