#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <tomlplusplus/toml.hpp>

#include "mgaze/checkpoint.hpp"
#include "mgaze/config.hpp"
#include "mgaze/errors.hpp"
#include "mgaze/eval.hpp"

namespace fs = std::filesystem;
using namespace mgaze;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInvalidInput = 2,
  kIoFailure = 3,
  kDiverged = 4,
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::size_t> max_epochs;
};

std::string default_out_dir() {
  const char* env = std::getenv("MGAZE_OUT");
  return env != nullptr && *env != '\0' ? env : "mgaze_out";
}

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg = args.config_path.empty() ? ExperimentConfig{} : load_config(args.config_path);
  for (const auto& o : args.overrides) apply_override(cfg, o);
  if (args.max_epochs) cfg.train.max_epochs = *args.max_epochs;
  validate(cfg);
  return cfg;
}

std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return "fnv1a:" + hex64(fnv1a(buf.str()));
}

// config.toml is a loadable snapshot; manifest.toml adds the command, seeds and artifact hashes.
void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const std::vector<fs::path>& artifacts) {
  const std::string snapshot = to_toml(cfg);
  open_out(dir / "config.toml") << snapshot;

  toml::table run{{"command", command},
                  {"config_hash", hex64(config_hash(cfg))},
                  {"init_seed", static_cast<std::int64_t>(cfg.train.init_seed)},
                  {"data_seed", static_cast<std::int64_t>(cfg.train.data_seed)},
                  {"shuffle_seed", static_cast<std::int64_t>(cfg.train.shuffle_seed)},
                  {"noise_seed", static_cast<std::int64_t>(cfg.noise.seed)},
                  {"noise_ratio", cfg.noise.ratio}};
  toml::table hashes;
  for (const auto& a : artifacts) hashes.insert(a.filename().string(), file_hash(a));
  toml::table manifest{{"run", std::move(run)}, {"config", toml::parse(snapshot)}, {"artifacts", std::move(hashes)}};
  open_out(dir / "manifest.toml") << manifest << '\n';
}

Dataset load_input(const std::string& path, const char* what) {
  if (path.empty()) throw InvalidArgument(std::string("missing --") + what);
  return load_dataset(path);
}

void require_dims(const Dataset& data, const ModelState& model) {
  if (data.input_dim() != model.input_dim()) {
    throw InvalidArgument("dataset has " + std::to_string(data.input_dim()) +
                          " input features but the checkpoint expects " + std::to_string(model.input_dim()));
  }
}

bool both_classes(const Dataset& data) {
  const auto mask = data.noise_mask();
  const auto pos = std::count(mask.begin(), mask.end(), true);
  return pos > 0 && static_cast<std::size_t>(pos) < mask.size();
}

int cmd_generate(const CommonArgs& common, std::optional<double> ratio, std::optional<double> sigma) {
  ExperimentConfig cfg = resolve_config(common);
  if (ratio) cfg.noise.ratio = *ratio;
  if (sigma) cfg.noise.sigma_deg = *sigma;
  validate(cfg);
  const fs::path dir = common.out_dir;
  fs::create_directories(dir);

  const Dataset source =
      inject_label_noise(generate_domain(cfg.source), cfg.noise.ratio, cfg.noise.sigma_deg, cfg.noise.seed);
  const Dataset target = generate_domain(cfg.target);
  save_dataset(source, dir / "source.csv");
  save_dataset(target, dir / "target.csv");
  write_manifest(dir, "generate", cfg, {dir / "source.csv", dir / "target.csv"});

  const auto mask = source.noise_mask();
  std::cout << "wrote " << source.size() << " source rows (" << std::count(mask.begin(), mask.end(), true)
            << " noisy) and " << target.size() << " target rows to " << dir.string() << '\n';
  return kOk;
}

void write_train_log(const fs::path& path, const FitHistory& history) {
  auto out = open_out(path);
  out << "epoch,iteration,l_gaze,l_align_clean,l_align_noisy,l_total\n";
  for (const auto* rows : {&history.warmup_losses, &history.losses}) {
    for (const auto& r : *rows) {
      out << r.epoch << ',' << r.iteration << ',' << num(r.loss.l_gaze) << ',' << num(r.loss.l_align_clean) << ','
          << num(r.loss.l_align_noisy) << ',' << num(r.loss.l_total) << '\n';
    }
  }
}

void write_metrics(const fs::path& path, const FitHistory& history) {
  auto out = open_out(path);
  out << "epoch,mean_eta_clean,mean_eta_noisy,precision,recall,auroc,source_error,target_error\n";
  for (const auto& m : history.epochs) {
    out << m.epoch << ',' << num(m.mean_eta_clean) << ',' << num(m.mean_eta_noisy) << ',' << opt_num(m.precision)
        << ',' << opt_num(m.recall) << ',' << opt_num(m.auroc) << ',' << opt_num(m.source_error_deg) << ','
        << opt_num(m.target_error_deg) << '\n';
  }
}

Checkpoint make_checkpoint(const ModelState& model, const PrototypeBank& bank, const ExperimentConfig& cfg,
                           long epoch) {
  return {model.clone(), bank.clone(), config_hash(cfg), epoch, cfg.train.init_seed, cfg.train.data_seed,
          cfg.train.shuffle_seed};
}

int cmd_train(const CommonArgs& common, const std::string& source_path, const std::string& target_path) {
  const ExperimentConfig cfg = resolve_config(common);
  const Dataset source = load_input(source_path, "source");
  std::optional<Dataset> target;
  if (!target_path.empty()) target = load_dataset(target_path);
  if (target && target->input_dim() != source.input_dim()) {
    throw InvalidArgument("source and target datasets differ in input width");
  }
  const fs::path dir = common.out_dir;
  fs::create_directories(dir);

  std::vector<fs::path> artifacts;
  FitOptions options;
  options.source_eval = &source;
  options.target = target ? &*target : nullptr;
  options.keep_partitions = false;
  if (cfg.train.checkpoint_every > 0) {
    options.on_epoch = [&](long epoch, const ModelState& model, const PrototypeBank& bank) {
      if (epoch % static_cast<long>(cfg.train.checkpoint_every) != 0) return;
      std::ostringstream name;
      name << "checkpoint_epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
      save_checkpoint(dir / name.str(), make_checkpoint(model, bank, cfg, epoch));
      artifacts.push_back(dir / name.str());
    };
  }

  FitResult result = fit(source, cfg.train, options);
  write_train_log(dir / "train_log.csv", result.history);
  write_metrics(dir / "metrics.csv", result.history);
  save_checkpoint(dir / "model.ckpt",
                  make_checkpoint(result.model, result.bank, cfg, static_cast<long>(cfg.train.max_epochs)));
  artifacts.insert(artifacts.begin(), {dir / "train_log.csv", dir / "metrics.csv", dir / "model.ckpt"});
  write_manifest(dir, "train", cfg, artifacts);

  std::cout << "trained " << cfg.train.warmup_epochs << " warm-up + " << cfg.train.max_epochs << " epochs on "
            << source.size() << " samples";
  if (!result.history.epochs.empty()) {
    const auto& last = result.history.epochs.back();
    if (last.source_error_deg) std::cout << "; source error " << num(*last.source_error_deg) << " deg";
    if (last.target_error_deg) std::cout << "; target error " << num(*last.target_error_deg) << " deg";
    if (last.auroc) std::cout << "; detection auroc " << num(*last.auroc);
  }
  std::cout << '\n';
  return kOk;
}

int cmd_detect(const CommonArgs& common, const std::string& checkpoint_path, const std::string& data_path) {
  const ExperimentConfig cfg = resolve_config(common);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset data = load_input(data_path, "data");
  require_dims(data, ck.model);
  const fs::path dir = common.out_dir;
  fs::create_directories(dir);

  const std::vector<double> eta = score_samples(data, ck.model, ck.bank, cfg.train, ck.epoch);
  const PartitionState split = partition(eta, cfg.train.t_percent, static_cast<int>(ck.epoch));
  const auto flagged = split.noisy_mask();
  std::vector<std::size_t> order = iota_indices(data.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return eta[a] > eta[b]; });

  {
    auto out = open_out(dir / "detect.csv");
    out << "index,eta,is_flagged_noisy,true_noise_flag\n";
    for (std::size_t i : order) {
      out << i << ',' << num(eta[i]) << ',' << (flagged[i] ? 1 : 0) << ',' << (data.samples[i].is_noisy ? 1 : 0)
          << '\n';
    }
  }
  write_manifest(dir, "detect", cfg, {dir / "detect.csv"});

  std::cout << "scored " << data.size() << " samples with " << to_string(cfg.train.indicator) << "; flagged "
            << split.noisy_indices.size() << " at t=" << num(cfg.train.t_percent) << '%';
  if (both_classes(data)) {
    const DetectionMetrics d = detection_metrics(eta, data.noise_mask(), cfg.train.t_percent);
    std::cout << "; precision " << num(d.precision) << " recall " << num(d.recall) << " auroc " << num(d.auroc);
  }
  std::cout << '\n';
  return kOk;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint_path, const std::vector<std::string>& data_paths) {
  const ExperimentConfig cfg = resolve_config(common);
  if (data_paths.empty()) throw InvalidArgument("missing --data");
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const fs::path dir = common.out_dir;
  fs::create_directories(dir);

  std::vector<EvalReport> reports;
  for (const auto& path : data_paths) {
    const Dataset data = load_dataset(path);
    require_dims(data, ck.model);
    EvalReport report = evaluate(ck.model, data);
    if (both_classes(data)) {
      const auto eta = score_samples(data, ck.model, ck.bank, cfg.train, ck.epoch);
      report.detection = detection_metrics(eta, data.noise_mask(), cfg.train.t_percent);
    }
    std::cout << eval_summary(report) << '\n';
    reports.push_back(std::move(report));
  }
  write_eval_csv(dir / "eval.csv", reports);
  write_manifest(dir, "eval", cfg, {dir / "eval.csv"});
  return kOk;
}

int cmd_compare(const CommonArgs& common, std::vector<double> ratios, std::optional<double> sigma) {
  ExperimentConfig cfg = resolve_config(common);
  if (sigma) cfg.noise.sigma_deg = *sigma;
  if (ratios.empty()) ratios = {cfg.noise.ratio};
  validate(cfg);
  const fs::path dir = common.out_dir;
  fs::create_directories(dir);

  const Dataset clean_source = generate_domain(cfg.source);
  const Dataset target = generate_domain(cfg.target);
  std::vector<ComparisonReport> rows;
  bool diverged = false;
  for (double ratio : ratios) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise ratio " + num(ratio) + " outside [0, 1]");
    const Dataset source = inject_label_noise(clean_source, ratio, cfg.noise.sigma_deg, cfg.noise.seed);
    ComparisonReport row;
    try {
      row = compare_baseline(source, target, cfg.train, ratio);
    } catch (const NumericError& e) {
      std::cerr << "ratio " << num(ratio) << ": run diverged: " << e.what() << '\n';
      row.noise_ratio = ratio;
      row.baseline_target_error_deg = row.robust_target_error_deg = std::nan("");
      row.relative_improvement = std::nan("");
      diverged = true;
    }
    std::cout << "ratio " << num(ratio) << ": baseline " << num(row.baseline_target_error_deg) << " deg, robust "
              << num(row.robust_target_error_deg) << " deg, relative improvement "
              << num(row.relative_improvement) << '\n';
    rows.push_back(std::move(row));
  }
  write_comparison_csv(dir / "compare.csv", rows);
  open_out(dir / "compare.svg") << comparison_svg(rows);
  write_manifest(dir, "compare", cfg, {dir / "compare.csv", dir / "compare.svg"});
  return diverged ? kDiverged : kOk;
}

void add_common(CLI::App* sub, CommonArgs& common) {
  sub->add_option("--config", common.config_path, "TOML or JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--override", common.overrides, "key=value, dotted for tables; repeatable")
      ->allow_extra_args(false);
  sub->add_option("--out", common.out_dir, "output directory (default $MGAZE_OUT or ./mgaze_out)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust gaze regression on synthetic domains"};
  app.require_subcommand(1);
  CommonArgs common;
  common.out_dir = default_out_dir();
  std::optional<double> noise_ratio, noise_sigma;
  std::optional<std::size_t> max_epochs;
  std::string source_path, target_path, checkpoint_path, data_path;
  std::vector<std::string> data_paths;
  std::vector<double> ratios;

  auto* generate = app.add_subcommand("generate", "write source and target datasets");
  add_common(generate, common);
  generate->add_option("--noise-ratio", noise_ratio, "fraction of source labels to corrupt");
  generate->add_option("--noise-sigma-deg", noise_sigma, "std of the label perturbation in degrees");

  auto* train = app.add_subcommand("train", "run the robust training pipeline");
  add_common(train, common);
  train->add_option("--source", source_path, "source dataset CSV")->required();
  train->add_option("--target", target_path, "optional target dataset CSV for per-epoch error");
  train->add_option("--max-epochs", max_epochs, "main epochs after warm-up");

  auto* detect = app.add_subcommand("detect", "rank samples by the noise indicator");
  add_common(detect, common);
  detect->add_option("--checkpoint", checkpoint_path, "checkpoint from train")->required();
  detect->add_option("--data", data_path, "dataset CSV")->required();

  auto* eval = app.add_subcommand("eval", "angular error of a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint from train")->required();
  eval->add_option("--data", data_paths, "dataset CSV; repeatable")->required();

  auto* compare = app.add_subcommand("compare", "baseline vs robust training across noise ratios");
  add_common(compare, common);
  compare->add_option("--noise-ratios", ratios, "comma separated ratios")->delimiter(',');
  compare->add_option("--noise-sigma-deg", noise_sigma, "std of the label perturbation in degrees");
  compare->add_option("--max-epochs", max_epochs, "main epochs after warm-up");

  CLI11_PARSE(app, argc, argv);
  common.max_epochs = max_epochs;

  try {
    if (*generate) return cmd_generate(common, noise_ratio, noise_sigma);
    if (*train) return cmd_train(common, source_path, target_path);
    if (*detect) return cmd_detect(common, checkpoint_path, data_path);
    if (*eval) return cmd_eval(common, checkpoint_path, data_paths);
    if (*compare) return cmd_compare(common, ratios, noise_sigma);
  } catch (const NumericError& e) {
    std::cerr << "error: training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
