#include "mgaze/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mgaze/errors.hpp"
#include "mgaze/eval.hpp"

namespace mgaze {

std::string to_string(Indicator indicator) {
  return indicator == Indicator::kEta ? "eta" : "l1";
}

Indicator indicator_from_string(const std::string& name) {
  if (name == "eta") return Indicator::kEta;
  if (name == "l1") return Indicator::kL1;
  throw ConfigError("indicator must be 'eta' or 'l1', got '" + name + "'");
}

std::size_t TrainConfig::effective_batch_noisy() const {
  if (batch_noisy >= 0) return static_cast<std::size_t>(batch_noisy);
  if (t_percent <= 0.0) return 0;
  const double proportional = static_cast<double>(batch_clean) * t_percent / (100.0 - t_percent);
  return std::max<std::size_t>(8, static_cast<std::size_t>(std::llround(proportional)));
}

ModelDims TrainConfig::model_dims(std::size_t input_dim) const {
  ModelDims dims;
  dims.input_dim = input_dim;
  dims.backbone_widths = {hidden_width, hidden_width, feature_dim};
  dims.projection_widths = {projection_hidden, projection_dim};
  return dims;
}

void validate(const TrainConfig& cfg) {
  if (cfg.K < 2) throw ConfigError("K: must be at least 2");
  if (!(cfg.t_percent >= 0.0 && cfg.t_percent < 100.0)) throw ConfigError("t_percent: must lie in [0, 100)");
  if (!(cfg.lambda >= 0.0)) throw ConfigError("lambda: must be non-negative");
  if (!(cfg.tau > 0.0)) throw ConfigError("tau: must be positive");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha: must lie in (0, 1)");
  if (cfg.batch_clean < 2) throw ConfigError("batch_clean: must be at least 2");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning_rate: must be non-negative");
  if (cfg.score_batch == 1) throw ConfigError("score_batch: must be 0 or at least 2");
  if (cfg.hidden_width == 0 || cfg.feature_dim == 0 || cfg.projection_hidden == 0 ||
      cfg.projection_dim == 0) {
    throw ConfigError("model widths must be positive");
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

AdamState AdamState::for_parameters(std::span<const Tensor> params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& opt,
               double lr) {
  if (grads.size() != params.size() || opt.m.size() != params.size() || opt.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::size_t n = params[k].numel();
    if ((!grads[k].empty() && grads[k].size() != n) || opt.m[k].size() != n || opt.v[k].size() != n) {
      throw ShapeError("adam_step: shape mismatch on parameter " + std::to_string(k));
    }
  }
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    auto& m = opt.m[k];
    auto& v = opt.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[k].empty() ? 0.0 : grads[k][i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& opt, double lr) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());
  adam_step(params, grads, opt, lr);
}

namespace {

// Stream ids so that every random draw in a run has its own seed.
constexpr std::uint64_t kWarmupStream = 1000;
constexpr std::uint64_t kEpochStream = 2000000;
constexpr std::uint64_t kBaselineStream = 4000000;

void zero_grads(std::span<Tensor> params) {
  for (Tensor& p : params) p.zero_grad();
}

void require_finite(const Tensor& loss, long epoch, long iteration) {
  if (!std::isfinite(loss.item())) {
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                       std::to_string(iteration));
  }
}

void step(std::span<Tensor> params, AdamState& opt, double lr, long epoch, long iteration) {
  adam_step(params, opt, lr);
  for (const Tensor& p : params) {
    for (double v : p.values()) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite parameter after step at epoch " + std::to_string(epoch) + ", iteration " +
                           std::to_string(iteration));
      }
    }
  }
}

std::size_t iterations_for(std::size_t count, std::size_t batch) {
  if (count < 2) return 0;
  return std::max<std::size_t>(1, count / batch);
}

}  // namespace

void warmup(const Dataset& dataset, ModelState& model, PrototypeBank& bank, AdamState& opt,
            const TrainConfig& cfg, std::vector<LossRow>* log) {
  if (dataset.size() < 2) throw InvalidArgument("warmup: dataset needs at least 2 samples");
  std::vector<Tensor> params = model.parameters();
  std::vector<std::size_t> order = iota_indices(dataset.size());
  for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) {
    std::mt19937_64 rng(derive_seed(cfg.shuffle_seed, kWarmupStream + e));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t batch = std::min(cfg.batch_clean, dataset.size());
    const std::size_t iters = iterations_for(dataset.size(), batch);
    for (std::size_t it = 0; it < iters; ++it) {
      std::span<const std::size_t> idx(order.data() + it * batch, batch);
      const Tensor f = feature_extract(dataset.inputs(idx), model);
      const Tensor g = regress(f, model);
      const Tensor lg = gaze_loss(g, dataset.labels(idx));
      Tensor lc = Tensor::scalar(0.0);
      if (cfg.warmup_uses_align) {
        const Tensor z = project(f, model);
        prototype_ema_update(bank, detach(z), prototype_assign(z, bank));
        const Tensor am = affinity_square(manifold_embed(z, bank));
        lc = clean_align_loss(affinity_square(dataset.label_vectors(idx)), am);
      } else {
        NoGradGuard no_grad;
        const Tensor z = project(f, model);
        prototype_ema_update(bank, z, prototype_assign(z, bank));
      }
      const Tensor zero = Tensor::scalar(0.0);
      const Tensor total = total_loss(lg, lc, zero, cfg.lambda);
      const long epoch = -static_cast<long>(cfg.warmup_epochs - e);
      require_finite(total, epoch, static_cast<long>(it));
      zero_grads(params);
      backward(total);
      step(params, opt, cfg.learning_rate, epoch, static_cast<long>(it));
      if (log) log->push_back({epoch, static_cast<long>(it), breakdown(lg, lc, zero, total, cfg.lambda)});
    }
  }
}

void train_epoch(const Dataset& dataset, const PartitionState& partition, ModelState& model,
                 PrototypeBank& bank, AdamState& opt, const TrainConfig& cfg, long epoch,
                 std::vector<LossRow>* log) {
  if (partition.clean_indices.size() < 2) {
    throw StateError("train_epoch: clean subset needs at least 2 samples");
  }
  if (partition.size() != dataset.size()) throw StateError("train_epoch: partition does not match dataset");
  std::vector<Tensor> params = model.parameters();
  std::mt19937_64 rng(derive_seed(cfg.shuffle_seed, kEpochStream + static_cast<std::uint64_t>(epoch)));

  std::vector<std::size_t> clean = partition.clean_indices;
  std::vector<std::size_t> noisy = partition.noisy_indices;
  std::shuffle(clean.begin(), clean.end(), rng);
  std::shuffle(noisy.begin(), noisy.end(), rng);

  const std::size_t bc = std::min(cfg.batch_clean, clean.size());
  const std::size_t bn = std::min(cfg.effective_batch_noisy(), noisy.size());
  const std::size_t iters = iterations_for(clean.size(), bc);
  std::size_t noisy_cursor = 0;

  for (std::size_t it = 0; it < iters; ++it) {
    std::span<const std::size_t> cidx(clean.data() + it * bc, bc);
    const Tensor fc = feature_extract(dataset.inputs(cidx), model);
    const Tensor gc = regress(fc, model);
    const Tensor zc = project(fc, model);

    prototype_ema_update(bank, detach(zc), prototype_assign(zc, bank));
    const Tensor pc = manifold_embed(zc, bank);

    const Tensor lg = gaze_loss(gc, dataset.labels(cidx));
    const Tensor lc = clean_align_loss(affinity_square(dataset.label_vectors(cidx)), affinity_square(pc));

    Tensor ln = Tensor::scalar(0.0);
    if (bn > 0) {
      if (noisy_cursor + bn > noisy.size()) {
        std::shuffle(noisy.begin(), noisy.end(), rng);
        noisy_cursor = 0;
      }
      std::span<const std::size_t> nidx(noisy.data() + noisy_cursor, bn);
      noisy_cursor += bn;
      const Tensor fn = feature_extract(dataset.inputs(nidx), model);
      const Tensor pn = manifold_embed(project(fn, model), bank);
      const Tensor feature_aff = affinity_cross(fn, fc);
      const Tensor manifold_aff = affinity_cross(pn, pc);
      ln = noisy_align_loss(feature_aff, manifold_aff, cfg.detach_teacher);
    }

    const Tensor total = total_loss(lg, lc, ln, cfg.lambda);
    require_finite(total, epoch, static_cast<long>(it));
    zero_grads(params);
    backward(total);
    step(params, opt, cfg.learning_rate, epoch, static_cast<long>(it));
    if (log) log->push_back({epoch, static_cast<long>(it), breakdown(lg, lc, ln, total, cfg.lambda)});
  }
}

std::vector<double> score_samples(const Dataset& dataset, const ModelState& model,
                                  const PrototypeBank& bank, const TrainConfig& cfg, long epoch) {
  if (cfg.indicator == Indicator::kL1) return score_l1(dataset, model);
  return score_dataset(dataset, model, bank, cfg.effective_score_batch(),
                       derive_seed(cfg.data_seed, static_cast<std::uint64_t>(epoch)),
                       cfg.include_diag_in_eta);
}

namespace {

double mean_over(std::span<const double> values, std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i : idx) acc += values[i];
  return acc / static_cast<double>(idx.size());
}

}  // namespace

FitResult fit(const Dataset& source, const TrainConfig& cfg, const FitOptions& options) {
  validate(cfg);
  if (source.size() < 2) throw InvalidArgument("fit: source dataset needs at least 2 samples");

  FitResult result{ModelState::init(cfg.model_dims(source.input_dim()), cfg.init_seed),
                   PrototypeBank::random(cfg.K, cfg.projection_dim, derive_seed(cfg.init_seed, 1),
                                         cfg.alpha, cfg.tau),
                   {},
                   {}};
  ModelState& model = result.model;
  PrototypeBank& bank = result.bank;
  FitHistory& history = result.history;
  AdamState opt = AdamState::for_parameters(model.parameters());

  PartitionState current;
  try {
    warmup(source, model, bank, opt, cfg, &history.warmup_losses);

    current = partition(score_samples(source, model, bank, cfg, 0), cfg.t_percent, 0);
    if (options.keep_partitions) history.partitions.push_back(current);

    const bool has_mask = source.has_noise() && !std::all_of(source.samples.begin(), source.samples.end(),
                                                             [](const auto& s) { return s.is_noisy; });
    const auto mask = source.noise_mask();

    for (std::size_t e = 1; e <= cfg.max_epochs; ++e) {
      const long epoch = static_cast<long>(e);
      train_epoch(source, current, model, bank, opt, cfg, epoch, &history.losses);

      current = partition(score_samples(source, model, bank, cfg, epoch), cfg.t_percent, static_cast<int>(epoch));
      ++history.repartition_count;
      if (options.keep_partitions) history.partitions.push_back(current);

      EpochMetrics m;
      m.epoch = epoch;
      m.mean_eta_clean = mean_over(current.eta, current.clean_indices);
      m.mean_eta_noisy = mean_over(current.eta, current.noisy_indices);
      m.noisy_count = current.noisy_indices.size();
      if (has_mask) {
        const DetectionMetrics d = detection_metrics(current.eta, mask, cfg.t_percent);
        m.precision = d.precision;
        m.recall = d.recall;
        m.auroc = d.auroc;
      }
      if (options.source_eval) m.source_error_deg = evaluate(model, *options.source_eval).mean_angular_error_deg;
      if (options.target) m.target_error_deg = evaluate(model, *options.target).mean_angular_error_deg;
      history.epochs.push_back(m);

      if (options.on_epoch) options.on_epoch(epoch, model, bank);
    }
  } catch (const DegenerateInputError& e) {
    // Zero feature or projection rows only appear once the weights have blown up.
    throw NumericError(std::string("training collapsed: ") + e.what());
  }
  result.partition = std::move(current);
  return result;
}

ModelState train_baseline(const Dataset& source, const TrainConfig& cfg, std::vector<LossRow>* log) {
  validate(cfg);
  if (source.size() < 2) throw InvalidArgument("train_baseline: dataset needs at least 2 samples");
  ModelState model = ModelState::init(cfg.model_dims(source.input_dim()), cfg.init_seed);
  std::vector<Tensor> params = model.backbone_regressor_parameters();
  AdamState opt = AdamState::for_parameters(params);
  std::vector<std::size_t> order = iota_indices(source.size());
  const std::size_t epochs = cfg.warmup_epochs + cfg.max_epochs;
  const std::size_t batch = std::min(cfg.batch_clean, source.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::mt19937_64 rng(derive_seed(cfg.shuffle_seed, kBaselineStream + e));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t iters = iterations_for(source.size(), batch);
    for (std::size_t it = 0; it < iters; ++it) {
      std::span<const std::size_t> idx(order.data() + it * batch, batch);
      const Tensor lg = gaze_loss(regress(feature_extract(source.inputs(idx), model), model), source.labels(idx));
      require_finite(lg, static_cast<long>(e), static_cast<long>(it));
      zero_grads(params);
      backward(lg);
      step(params, opt, cfg.learning_rate, static_cast<long>(e), static_cast<long>(it));
      if (log) {
        const Tensor zero = Tensor::scalar(0.0);
        log->push_back({static_cast<long>(e), static_cast<long>(it), breakdown(lg, zero, zero, lg, 0.0)});
      }
    }
  }
  return model;
}

}  // namespace mgaze
