#include "mgaze/model.hpp"

#include <cmath>
#include <random>

#include "mgaze/errors.hpp"

namespace mgaze {

namespace {

Affine make_affine(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  std::vector<double> b(out);
  for (double& v : w) v = dist(rng);
  for (double& v : b) v = dist(rng);
  return {Tensor::matrix(in, out, std::move(w), true), Tensor::matrix(1, out, std::move(b), true)};
}

Affine clone_affine(const Affine& layer) { return {layer.weight.clone(), layer.bias.clone()}; }

void require_width(const Tensor& t, std::size_t width, const char* what) {
  if (t.rank() != 2 || t.cols() != width) {
    throw ShapeError(std::string(what) + ": expected width " + std::to_string(width) + ", got " +
                     std::to_string(t.rank() == 2 ? t.cols() : 0));
  }
}

}  // namespace

Tensor affine(const Tensor& x, const Affine& layer) {
  require_width(x, layer.in_dim(), "affine");
  const Tensor ones = Tensor::full({x.rows(), 1}, 1.0);
  return add(matmul(x, layer.weight), matmul(ones, layer.bias));
}

ModelState ModelState::init(const ModelDims& dims, std::uint64_t seed) {
  if (dims.input_dim == 0 || dims.backbone_widths.empty() || dims.projection_widths.empty()) {
    throw ConfigError("model dims: input, backbone and projection must be non-empty");
  }
  std::mt19937_64 rng(seed);
  ModelState state;
  std::size_t in = dims.input_dim;
  for (std::size_t w : dims.backbone_widths) {
    state.backbone.push_back(make_affine(in, w, rng));
    in = w;
  }
  state.regressor = make_affine(in, 2, rng);
  for (std::size_t w : dims.projection_widths) {
    state.projection.push_back(make_affine(in, w, rng));
    in = w;
  }
  return state;
}

ModelDims ModelState::dims() const {
  ModelDims d;
  d.input_dim = input_dim();
  d.backbone_widths.clear();
  for (const auto& l : backbone) d.backbone_widths.push_back(l.out_dim());
  d.projection_widths.clear();
  for (const auto& l : projection) d.projection_widths.push_back(l.out_dim());
  return d;
}

std::vector<Tensor> ModelState::parameters() const {
  std::vector<Tensor> out = backbone_regressor_parameters();
  for (const auto& l : projection) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<Tensor> ModelState::backbone_regressor_parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : backbone) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  out.push_back(regressor.weight);
  out.push_back(regressor.bias);
  return out;
}

std::vector<std::string> ModelState::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    out.push_back("backbone." + std::to_string(i) + ".weight");
    out.push_back("backbone." + std::to_string(i) + ".bias");
  }
  out.emplace_back("regressor.weight");
  out.emplace_back("regressor.bias");
  for (std::size_t i = 0; i < projection.size(); ++i) {
    out.push_back("projection." + std::to_string(i) + ".weight");
    out.push_back("projection." + std::to_string(i) + ".bias");
  }
  return out;
}

ModelState ModelState::clone() const {
  ModelState out;
  for (const auto& l : backbone) out.backbone.push_back(clone_affine(l));
  out.regressor = clone_affine(regressor);
  for (const auto& l : projection) out.projection.push_back(clone_affine(l));
  return out;
}

Tensor feature_extract(const Tensor& x, const ModelState& state) {
  require_width(x, state.input_dim(), "feature_extract");
  Tensor h = x;
  for (const auto& layer : state.backbone) h = tanh(affine(h, layer));
  return h;
}

Tensor regress(const Tensor& features, const ModelState& state) {
  require_width(features, state.feature_dim(), "regress");
  return affine(features, state.regressor);
}

Tensor project_raw(const Tensor& features, const ModelState& state) {
  require_width(features, state.feature_dim(), "project");
  Tensor h = features;
  for (std::size_t i = 0; i < state.projection.size(); ++i) {
    h = affine(h, state.projection[i]);
    if (i + 1 < state.projection.size()) h = tanh(h);
  }
  return h;
}

Tensor project(const Tensor& features, const ModelState& state) {
  return row_l2_normalize(project_raw(features, state));
}

PrototypeBank PrototypeBank::random(std::size_t k, std::size_t dim, std::uint64_t seed,
                                    double alpha, double tau) {
  if (k < 2) throw ConfigError("prototype count K must be at least 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("EMA momentum alpha must lie in (0, 1)");
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(k * dim);
  for (std::size_t r = 0; r < k; ++r) {
    double sq = 0.0;
    do {
      sq = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        values[r * dim + c] = normal(rng);
        sq += values[r * dim + c] * values[r * dim + c];
      }
    } while (sq == 0.0);
    const double norm = std::sqrt(sq);
    for (std::size_t c = 0; c < dim; ++c) values[r * dim + c] /= norm;
  }
  return {Tensor::matrix(k, dim, std::move(values)), alpha, tau};
}

Tensor prototype_assign(const Tensor& z, const PrototypeBank& bank) {
  if (!(bank.tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (z.rank() != 2 || z.cols() != bank.dim()) {
    throw ShapeError("prototype_assign: z width does not match prototype width");
  }
  return row_softmax(scale(matmul(detach(z), transpose(bank.mu)), 1.0 / bank.tau));
}

void prototype_ema_update(PrototypeBank& bank, const Tensor& z, const Tensor& assignment) {
  const std::size_t k = bank.count(), d = bank.dim();
  if (z.rank() != 2 || z.cols() != d) throw ShapeError("prototype_ema_update: z width mismatch");
  if (assignment.rank() != 2 || assignment.rows() != z.rows() || assignment.cols() != k) {
    throw ShapeError("prototype_ema_update: assignment must be B x K");
  }
  const std::size_t b = z.rows();
  auto zv = z.values();
  auto rv = assignment.values();
  auto mu = bank.mu.mutable_values();
  std::vector<double> mean(d);
  for (std::size_t kk = 0; kk < k; ++kk) {
    double mass = 0.0;
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      const double r = rv[i * k + kk];
      mass += r;
      for (std::size_t c = 0; c < d; ++c) mean[c] += r * zv[i * d + c];
    }
    if (!(mass > 0.0)) continue;
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = bank.alpha * mu[kk * d + c] + (1.0 - bank.alpha) * mean[c] / mass;
      mean[c] = v;
      sq += v * v;
    }
    // Antipodal cancellation leaves no direction; keep the old prototype.
    if (sq == 0.0) continue;
    const double norm = std::sqrt(sq);
    for (std::size_t c = 0; c < d; ++c) mu[kk * d + c] = mean[c] / norm;
  }
}

Tensor manifold_embed(const Tensor& z, const PrototypeBank& bank) {
  if (z.rank() != 2 || z.cols() != bank.dim()) {
    throw ShapeError("manifold_embed: z width does not match prototype width");
  }
  return matmul(z, transpose(bank.mu));
}

}  // namespace mgaze
