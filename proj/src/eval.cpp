#include "mgaze/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mgaze/errors.hpp"

namespace mgaze {

Tensor predict(const ModelState& model, const Dataset& dataset) {
  NoGradGuard no_grad;
  const auto idx = iota_indices(dataset.size());
  return regress(feature_extract(dataset.inputs(idx), model), model);
}

EvalReport evaluate(const ModelState& model, const Dataset& dataset) {
  if (dataset.empty()) throw InvalidArgument("evaluate: empty dataset");
  const Tensor pred = predict(model, dataset);
  auto p = pred.values();
  EvalReport report;
  report.domain_id = dataset.samples.front().domain_id;
  report.n_samples = dataset.size();
  report.per_sample_errors.resize(dataset.size());
  double total = 0.0, total_obs = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Vec3 v = pitchyaw_to_vec(p[2 * i], p[2 * i + 1]);
    const double err = angular_error_deg(v, pitchyaw_to_vec(dataset.samples[i].y_clean));
    report.per_sample_errors[i] = err;
    total += err;
    total_obs += angular_error_deg(v, pitchyaw_to_vec(dataset.samples[i].y_obs));
  }
  report.mean_angular_error_deg = total / static_cast<double>(dataset.size());
  report.mean_obs_error_deg = total_obs / static_cast<double>(dataset.size());
  return report;
}

double auroc(std::span<const double> scores, const std::vector<bool>& mask) {
  if (scores.size() != mask.size()) throw ShapeError("auroc: scores and mask differ in length");
  const std::size_t n = scores.size();
  const auto positives = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw InvalidArgument("auroc: mask needs at least one positive and one negative");
  }
  std::vector<std::size_t> order = iota_indices(n);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (mask[order[k]]) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

DetectionMetrics detection_metrics(std::span<const double> eta, const std::vector<bool>& mask,
                                   double t_percent) {
  DetectionMetrics out;
  out.auroc = auroc(eta, mask);
  out.t_percent = t_percent;
  const PartitionState split = partition(eta, t_percent);
  std::size_t hits = 0;
  for (std::size_t i : split.noisy_indices) hits += mask[i] ? 1 : 0;
  const auto positives = static_cast<double>(std::count(mask.begin(), mask.end(), true));
  out.precision = split.noisy_indices.empty()
                      ? 0.0
                      : static_cast<double>(hits) / static_cast<double>(split.noisy_indices.size());
  out.recall = static_cast<double>(hits) / positives;
  return out;
}

ComparisonReport compare_baseline(const Dataset& source, const Dataset& target, const TrainConfig& cfg,
                                  double noise_ratio) {
  if (source.empty() || target.empty()) throw InvalidArgument("compare_baseline: empty dataset");
  ComparisonReport report;
  report.noise_ratio = noise_ratio;

  const ModelState baseline = train_baseline(source, cfg);
  report.baseline_target_error_deg = evaluate(baseline, target).mean_angular_error_deg;
  report.baseline_source_error_deg = evaluate(baseline, source).mean_angular_error_deg;

  FitOptions options;
  FitResult robust = fit(source, cfg, options);
  report.robust_target_error_deg = evaluate(robust.model, target).mean_angular_error_deg;
  report.robust_source_error_deg = evaluate(robust.model, source).mean_angular_error_deg;
  report.relative_improvement =
      (report.baseline_target_error_deg - report.robust_target_error_deg) / report.baseline_target_error_deg;

  const auto mask = source.noise_mask();
  const auto positives = std::count(mask.begin(), mask.end(), true);
  if (positives > 0 && static_cast<std::size_t>(positives) < mask.size()) {
    report.detection = detection_metrics(robust.partition.eta, mask, cfg.t_percent);
  }
  report.robust_history = std::move(robust.history);
  return report;
}

namespace {

std::string fmt(double v, int precision = 6) {
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

}  // namespace

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "domain_id,n_samples,mean_angular_error_deg,mean_obs_error_deg,precision,recall,auroc,t_percent\n";
  for (const auto& r : reports) {
    out << r.domain_id << ',' << r.n_samples << ',' << fmt(r.mean_angular_error_deg, 10) << ','
        << fmt(r.mean_obs_error_deg, 10);
    if (r.detection) {
      out << ',' << fmt(r.detection->precision) << ',' << fmt(r.detection->recall) << ','
          << fmt(r.detection->auroc) << ',' << fmt(r.detection->t_percent);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::string eval_summary(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << report.domain_id << ": n=" << report.n_samples << " clean-label error "
      << report.mean_angular_error_deg << " deg, observed-label error " << report.mean_obs_error_deg << " deg";
  if (report.detection) {
    out << "; detection@" << report.detection->t_percent << "% precision " << report.detection->precision
        << " recall " << report.detection->recall << " auroc " << report.detection->auroc;
  }
  return out.str();
}

void write_comparison_csv(const std::filesystem::path& path, std::span<const ComparisonReport> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "noise_ratio,baseline_target_error_deg,robust_target_error_deg,relative_improvement,"
         "baseline_source_error_deg,robust_source_error_deg,precision,recall,auroc\n";
  for (const auto& r : rows) {
    out << fmt(r.noise_ratio) << ',' << fmt(r.baseline_target_error_deg, 10) << ','
        << fmt(r.robust_target_error_deg, 10) << ',' << fmt(r.relative_improvement) << ','
        << fmt(r.baseline_source_error_deg, 10) << ',' << fmt(r.robust_source_error_deg, 10);
    if (r.detection) {
      out << ',' << fmt(r.detection->precision) << ',' << fmt(r.detection->recall) << ','
          << fmt(r.detection->auroc);
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::string comparison_svg(std::span<const ComparisonReport> rows) {
  constexpr double kWidth = 480, kHeight = 320, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
  double lo = 1e300, hi = -1e300, x_max = 0.0;
  for (const auto& r : rows) {
    lo = std::min({lo, r.baseline_target_error_deg, r.robust_target_error_deg});
    hi = std::max({hi, r.baseline_target_error_deg, r.robust_target_error_deg});
    x_max = std::max(x_max, r.noise_ratio);
  }
  if (rows.empty()) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double pad = 0.1 * (hi - lo);
  lo -= pad;
  hi += pad;
  if (x_max <= 0.0) x_max = 1.0;
  auto sx = [&](double x) { return kLeft + (kWidth - kLeft - kRight) * x / x_max; };
  auto sy = [&](double y) { return kTop + (kHeight - kTop - kBottom) * (hi - y) / (hi - lo); };

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">noise ratio</text>\n";
  out << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
      << ")\" text-anchor=\"middle\">target error (deg)</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = lo + (hi - lo) * t / 4.0;
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  for (const auto& r : rows) {
    out << "<text x=\"" << sx(r.noise_ratio) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << r.noise_ratio << "</text>\n";
  }
  auto polyline = [&](auto pick, const char* color, const char* label, double legend_y) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) out << sx(r.noise_ratio) << ',' << sy(pick(r)) << ' ';
    out << "\"/>\n";
    for (const auto& r : rows) {
      out << "<circle cx=\"" << sx(r.noise_ratio) << "\" cy=\"" << sy(pick(r)) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    out << "<text x=\"" << kLeft + 10 << "\" y=\"" << legend_y << "\" fill=\"" << color << "\">" << label
        << "</text>\n";
  };
  polyline([](const ComparisonReport& r) { return r.baseline_target_error_deg; }, "#c0392b", "baseline", kTop - 10);
  polyline([](const ComparisonReport& r) { return r.robust_target_error_deg; }, "#2471a3", "robust", kTop + 6);
  out << "</svg>\n";
  return out.str();
}

}  // namespace mgaze
