#include "mgaze/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mgaze/errors.hpp"

namespace mgaze {

Vec3 pitchyaw_to_vec(double pitch, double yaw) {
  return {-std::cos(pitch) * std::sin(yaw), -std::sin(pitch), -std::cos(pitch) * std::cos(yaw)};
}

PitchYaw vec_to_pitchyaw(const Vec3& v) {
  const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (norm == 0.0) throw DegenerateInputError("vec_to_pitchyaw: zero vector");
  return {-std::asin(std::clamp(v[1] / norm, -1.0, 1.0)), std::atan2(-v[0], -v[2])};
}

double angular_error_deg(const Vec3& a, const Vec3& b) {
  const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("angular_error_deg: zero vector");
  const double c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
  return rad_to_deg(std::acos(std::clamp(c, -1.0, 1.0)));
}

double wrap_angle(double rad) {
  double w = std::fmod(rad + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  w -= kPi;
  // fmod maps +pi to -pi; the interval is closed at +pi.
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

std::vector<bool> Dataset::noise_mask() const {
  std::vector<bool> mask(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) mask[i] = samples[i].is_noisy;
  return mask;
}

bool Dataset::has_noise() const {
  return std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.is_noisy; });
}

Tensor Dataset::inputs(std::span<const std::size_t> idx) const {
  const std::size_t d = input_dim();
  std::vector<double> out;
  out.reserve(idx.size() * d);
  for (std::size_t i : idx) out.insert(out.end(), samples.at(i).x.begin(), samples.at(i).x.end());
  return Tensor::matrix(idx.size(), d, std::move(out));
}

Tensor Dataset::labels(std::span<const std::size_t> idx) const {
  std::vector<double> out;
  out.reserve(idx.size() * 2);
  for (std::size_t i : idx) {
    out.push_back(samples.at(i).y_obs.pitch);
    out.push_back(samples.at(i).y_obs.yaw);
  }
  return Tensor::matrix(idx.size(), 2, std::move(out));
}

Tensor Dataset::clean_labels(std::span<const std::size_t> idx) const {
  std::vector<double> out;
  out.reserve(idx.size() * 2);
  for (std::size_t i : idx) {
    out.push_back(samples.at(i).y_clean.pitch);
    out.push_back(samples.at(i).y_clean.yaw);
  }
  return Tensor::matrix(idx.size(), 2, std::move(out));
}

Tensor Dataset::label_vectors(std::span<const std::size_t> idx) const {
  std::vector<double> out;
  out.reserve(idx.size() * 3);
  for (std::size_t i : idx) {
    const Vec3 v = pitchyaw_to_vec(samples.at(i).y_obs);
    out.insert(out.end(), v.begin(), v.end());
  }
  return Tensor::matrix(idx.size(), 3, std::move(out));
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

void validate(const SyntheticDomainConfig& cfg) {
  if (cfg.n_samples < 2) throw ConfigError("n_samples must be at least 2");
  if (!(cfg.pitch_min_deg < cfg.pitch_max_deg) || cfg.pitch_min_deg < -90.0 ||
      cfg.pitch_max_deg > 90.0) {
    throw ConfigError("pitch range must be non-degenerate within [-90, 90] degrees");
  }
  if (!(cfg.yaw_min_deg < cfg.yaw_max_deg) || cfg.yaw_min_deg <= -180.0 || cfg.yaw_max_deg > 180.0) {
    throw ConfigError("yaw range must be non-degenerate within (-180, 180] degrees");
  }
  if (cfg.input_dim == 0 || cfg.embed_hidden == 0) throw ConfigError("input_dim and embed_hidden must be positive");
  if (!(cfg.style_std >= 0.0) || !(cfg.obs_noise >= 0.0)) {
    throw ConfigError("style_std and obs_noise must be non-negative");
  }
  if (cfg.domain_id.empty() || cfg.domain_id.find_first_of(",\n\r\"") != std::string::npos) {
    throw ConfigError("domain_id must be non-empty and free of commas, quotes and newlines");
  }
}

Dataset generate_domain(const SyntheticDomainConfig& cfg) {
  validate(cfg);
  const std::size_t in = 3 + cfg.style_dim;
  const std::size_t h = cfg.embed_hidden;
  const std::size_t d = cfg.input_dim;

  std::mt19937_64 embed_rng(cfg.embedding_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w1(h * in), b1(h), w2(d * h), b2(d);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < in; ++c) {
      const double gain = c < 3 ? 1.5 : 0.5 * cfg.style_gain;
      w1[r * in + c] = gain * normal(embed_rng);
    }
  }
  for (double& v : b1) v = 0.2 * normal(embed_rng);
  const double w2_scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (double& v : w2) v = w2_scale * normal(embed_rng);
  for (double& v : b2) v = 0.1 * normal(embed_rng);

  std::mt19937_64 rng(cfg.sample_seed);
  std::uniform_real_distribution<double> pitch_dist(deg_to_rad(cfg.pitch_min_deg),
                                                    deg_to_rad(cfg.pitch_max_deg));
  std::uniform_real_distribution<double> yaw_dist(deg_to_rad(cfg.yaw_min_deg),
                                                  deg_to_rad(cfg.yaw_max_deg));

  Dataset out;
  out.samples.reserve(cfg.n_samples);
  std::vector<double> latent(in), hidden(h);
  for (std::size_t n = 0; n < cfg.n_samples; ++n) {
    GazeSample s;
    s.y_clean = {pitch_dist(rng), yaw_dist(rng)};
    s.y_obs = s.y_clean;
    s.domain_id = cfg.domain_id;
    const Vec3 g = pitchyaw_to_vec(s.y_clean);
    std::copy(g.begin(), g.end(), latent.begin());
    for (std::size_t c = 0; c < cfg.style_dim; ++c) latent[3 + c] = cfg.style_mean + cfg.style_std * normal(rng);
    for (std::size_t r = 0; r < h; ++r) {
      double acc = b1[r];
      for (std::size_t c = 0; c < in; ++c) acc += w1[r * in + c] * latent[c];
      hidden[r] = std::tanh(acc);
    }
    s.x.resize(d);
    for (std::size_t r = 0; r < d; ++r) {
      double acc = b2[r];
      for (std::size_t c = 0; c < h; ++c) acc += w2[r * h + c] * hidden[c];
      s.x[r] = acc + cfg.obs_noise * normal(rng);
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

Dataset inject_label_noise(Dataset dataset, double ratio, double sigma_deg, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise ratio must lie in [0, 1]");
  if (!(sigma_deg >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  const std::size_t n = dataset.size();
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order = iota_indices(n);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(chosen.begin(), chosen.end());

  std::normal_distribution<double> normal(0.0, deg_to_rad(sigma_deg));
  for (std::size_t i : chosen) {
    GazeSample& s = dataset.samples[i];
    const double dp = normal(rng);
    const double dy = normal(rng);
    s.y_obs.pitch = std::clamp(s.y_clean.pitch + dp, -kPi / 2.0, kPi / 2.0);
    s.y_obs.yaw = wrap_angle(s.y_clean.yaw + dy);
    s.is_noisy = true;
  }
  return dataset;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("failed to format value");
  return std::string(buf, end);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(std::string_view text, std::size_t line, const std::string& column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("column " + column + ": cannot parse '" + std::string(text) + "' as a number", line);
  }
  return v;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t d = dataset.input_dim();
  out << "domain_id";
  for (std::size_t i = 0; i < d; ++i) out << ",x_" << i;
  out << ",pitch_obs,yaw_obs,pitch_clean,yaw_clean,is_noisy\n";
  for (const GazeSample& s : dataset.samples) {
    if (s.x.size() != d) throw InvalidArgument("save_dataset: samples have differing input widths");
    out << s.domain_id;
    for (double v : s.x) out << ',' << format_double(v);
    out << ',' << format_double(s.y_obs.pitch) << ',' << format_double(s.y_obs.yaw) << ','
        << format_double(s.y_clean.pitch) << ',' << format_double(s.y_clean.yaw) << ','
        << (s.is_noisy ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file, expected a header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_commas(line);
  if (header.empty() || header[0] != "domain_id") {
    throw ParseError("header must start with column domain_id", 1);
  }
  std::size_t d = 0;
  while (1 + d < header.size() && header[1 + d] == "x_" + std::to_string(d)) ++d;
  if (d == 0) throw ParseError("missing column x_0", 1);
  const char* tail[] = {"pitch_obs", "yaw_obs", "pitch_clean", "yaw_clean", "is_noisy"};
  for (std::size_t t = 0; t < 5; ++t) {
    const std::size_t pos = 1 + d + t;
    if (pos >= header.size() || header[pos] != tail[t]) {
      throw ParseError(std::string("missing column ") + tail[t], 1);
    }
  }
  const std::size_t width = 1 + d + 5;
  if (header.size() != width) throw ParseError("unexpected extra columns in header", 1);

  Dataset out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    GazeSample s;
    s.domain_id = std::string(fields[0]);
    if (s.domain_id.empty()) throw ParseError("column domain_id: empty value", line_no);
    s.x.resize(d);
    for (std::size_t i = 0; i < d; ++i) s.x[i] = parse_double(fields[1 + i], line_no, "x_" + std::to_string(i));
    s.y_obs.pitch = parse_double(fields[1 + d], line_no, "pitch_obs");
    s.y_obs.yaw = parse_double(fields[2 + d], line_no, "yaw_obs");
    s.y_clean.pitch = parse_double(fields[3 + d], line_no, "pitch_clean");
    s.y_clean.yaw = parse_double(fields[4 + d], line_no, "yaw_clean");
    const auto flag = fields[5 + d];
    if (flag == "1") {
      s.is_noisy = true;
    } else if (flag == "0") {
      s.is_noisy = false;
    } else {
      throw ParseError("column is_noisy: expected 0 or 1, got '" + std::string(flag) + "'", line_no);
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace mgaze
