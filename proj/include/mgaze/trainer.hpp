#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgaze/data.hpp"
#include "mgaze/losses.hpp"
#include "mgaze/manifold.hpp"
#include "mgaze/model.hpp"

namespace mgaze {

// Which per-sample score drives the clean/noisy split.
enum class Indicator {
  kEta,  // feature-label affinity discrepancy
  kL1,   // small-loss criterion on the training labels
};

std::string to_string(Indicator indicator);
Indicator indicator_from_string(const std::string& name);

struct TrainConfig {
  std::size_t K = 12;
  double t_percent = 10.0;
  double lambda = 0.1;
  double tau = 0.1;
  double alpha = 0.95;
  std::size_t batch_clean = 128;
  // Negative selects max(8, round(B_C * t / (100 - t))).
  long batch_noisy = -1;
  double learning_rate = 1e-4;
  std::size_t warmup_epochs = 10;
  std::size_t max_epochs = 100;
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 2;
  std::uint64_t shuffle_seed = 3;
  bool detach_teacher = true;
  bool include_diag_in_eta = true;
  bool warmup_uses_align = true;
  Indicator indicator = Indicator::kEta;
  // Chunk size for epoch-end eta scoring; 0 uses batch_clean.
  std::size_t score_batch = 0;
  std::size_t hidden_width = 64;
  std::size_t feature_dim = 32;
  std::size_t projection_hidden = 32;
  std::size_t projection_dim = 16;
  // Write a checkpoint every N main epochs; 0 disables.
  std::size_t checkpoint_every = 0;

  std::size_t effective_batch_noisy() const;
  std::size_t effective_score_batch() const { return score_batch == 0 ? batch_clean : score_batch; }
  ModelDims model_dims(std::size_t input_dim) const;
};

void validate(const TrainConfig& cfg);

// Deterministic per-stream seed (splitmix64 of base and stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_parameters(std::span<const Tensor> params);
};

// Bias-corrected Adam. An empty gradient counts as zeros.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& opt,
               double lr);
// Same, reading each parameter's own grad().
void adam_step(std::span<Tensor> params, AdamState& opt, double lr);

struct LossRow {
  long epoch = 0;
  long iteration = 0;
  LossBreakdown loss;
};

struct EpochMetrics {
  long epoch = 0;
  double mean_eta_clean = 0.0;
  double mean_eta_noisy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> auroc;
  std::optional<double> source_error_deg;
  std::optional<double> target_error_deg;
  std::size_t noisy_count = 0;
};

struct FitHistory {
  std::vector<LossRow> warmup_losses;
  std::vector<LossRow> losses;
  std::vector<EpochMetrics> epochs;
  // Initial split after warm-up followed by one entry per main epoch.
  std::vector<PartitionState> partitions;
  std::size_t repartition_count = 0;
};

struct FitOptions {
  // Scored against clean labels after every main epoch when present.
  const Dataset* source_eval = nullptr;
  const Dataset* target = nullptr;
  bool keep_partitions = true;
  // Called after every main epoch's repartition.
  std::function<void(long epoch, const ModelState&, const PrototypeBank&)> on_epoch;
};

struct FitResult {
  ModelState model;
  PrototypeBank bank;
  PartitionState partition;
  FitHistory history;
};

// Warm-up over all samples: L_gaze (+ L_align^C on the whole batch when
// warmup_uses_align), with EMA prototype updates from the full batch.
void warmup(const Dataset& dataset, ModelState& model, PrototypeBank& bank, AdamState& opt,
            const TrainConfig& cfg, std::vector<LossRow>* log = nullptr);

// One pass over the clean subset with paired noisy mini-batches.
void train_epoch(const Dataset& dataset, const PartitionState& partition, ModelState& model,
                 PrototypeBank& bank, AdamState& opt, const TrainConfig& cfg, long epoch,
                 std::vector<LossRow>* log = nullptr);

// Per-sample indicator for the configured indicator kind. Never mutates state.
std::vector<double> score_samples(const Dataset& dataset, const ModelState& model,
                                  const PrototypeBank& bank, const TrainConfig& cfg, long epoch);

FitResult fit(const Dataset& source, const TrainConfig& cfg, const FitOptions& options = {});

// Plain L_gaze over every sample for warmup_epochs + max_epochs epochs.
ModelState train_baseline(const Dataset& source, const TrainConfig& cfg,
                          std::vector<LossRow>* log = nullptr);

}  // namespace mgaze
