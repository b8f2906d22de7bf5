#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgaze/data.hpp"
#include "mgaze/model.hpp"
#include "mgaze/trainer.hpp"

namespace mgaze {

struct DetectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double auroc = 0.5;
  double t_percent = 0.0;
};

struct EvalReport {
  std::string domain_id;
  // Against y_clean.
  double mean_angular_error_deg = 0.0;
  // Against the training labels y_obs.
  double mean_obs_error_deg = 0.0;
  std::size_t n_samples = 0;
  std::vector<double> per_sample_errors;
  std::optional<DetectionMetrics> detection;
};

// Pitch/yaw predictions, B x 2, without recording a graph.
Tensor predict(const ModelState& model, const Dataset& dataset);

EvalReport evaluate(const ModelState& model, const Dataset& dataset);

// Mann-Whitney AUROC of eta against the mask; ties count one half.
double auroc(std::span<const double> scores, const std::vector<bool>& mask);

// Precision and recall of the top-t% selection plus AUROC.
DetectionMetrics detection_metrics(std::span<const double> eta, const std::vector<bool>& mask,
                                   double t_percent);

struct ComparisonReport {
  double noise_ratio = 0.0;
  double baseline_target_error_deg = 0.0;
  double robust_target_error_deg = 0.0;
  double baseline_source_error_deg = 0.0;
  double robust_source_error_deg = 0.0;
  // (baseline - robust) / baseline
  double relative_improvement = 0.0;
  std::optional<DetectionMetrics> detection;
  FitHistory robust_history;
};

ComparisonReport compare_baseline(const Dataset& source, const Dataset& target, const TrainConfig& cfg,
                                  double noise_ratio = 0.0);

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);
std::string eval_summary(const EvalReport& report);
void write_comparison_csv(const std::filesystem::path& path, std::span<const ComparisonReport> rows);
// Line plot of target error against noise ratio for both methods.
std::string comparison_svg(std::span<const ComparisonReport> rows);

}  // namespace mgaze
