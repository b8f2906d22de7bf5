#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mgaze/tensor.hpp"

namespace mgaze {

using Vec3 = std::array<double, 3>;

// Gaze angles in radians.
struct PitchYaw {
  double pitch = 0.0;
  double yaw = 0.0;

  bool operator==(const PitchYaw&) const = default;
};

// (-cos p sin y, -sin p, -cos p cos y): (0, 0) looks down -z.
Vec3 pitchyaw_to_vec(double pitch, double yaw);
inline Vec3 pitchyaw_to_vec(PitchYaw g) { return pitchyaw_to_vec(g.pitch, g.yaw); }
PitchYaw vec_to_pitchyaw(const Vec3& v);

double angular_error_deg(const Vec3& a, const Vec3& b);

constexpr double kPi = 3.14159265358979323846;
constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct GazeSample {
  std::vector<double> x;
  PitchYaw y_obs;    // training label
  PitchYaw y_clean;  // hidden ground truth
  bool is_noisy = false;
  std::string domain_id;

  bool operator==(const GazeSample&) const = default;
};

struct Dataset {
  std::vector<GazeSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t input_dim() const { return samples.empty() ? 0 : samples.front().x.size(); }
  std::vector<bool> noise_mask() const;
  bool has_noise() const;

  // Gather rows into B x D_in, B x 2 (pitch, yaw), and B x 3 unit-vector tensors.
  Tensor inputs(std::span<const std::size_t> idx) const;
  Tensor labels(std::span<const std::size_t> idx) const;
  Tensor clean_labels(std::span<const std::size_t> idx) const;
  Tensor label_vectors(std::span<const std::size_t> idx) const;

  bool operator==(const Dataset&) const = default;
};

std::vector<std::size_t> iota_indices(std::size_t n);

struct SyntheticDomainConfig {
  std::string domain_id = "source";
  std::size_t n_samples = 4000;
  double pitch_min_deg = -40.0;
  double pitch_max_deg = 40.0;
  double yaw_min_deg = -120.0;
  double yaw_max_deg = 120.0;
  std::size_t input_dim = 16;
  std::size_t style_dim = 4;
  std::size_t embed_hidden = 32;
  // Style vectors are drawn as N(style_mean, style_std^2) per coordinate.
  double style_mean = 0.0;
  double style_std = 1.0;
  // Relative weight of the style block inside the embedding.
  double style_gain = 1.0;
  double obs_noise = 0.02;
  std::uint64_t embedding_seed = 7;
  std::uint64_t sample_seed = 11;
};

void validate(const SyntheticDomainConfig& cfg);

// x = W2 tanh(W1 [g3d; s] + b1) + b2 + eps. The W/b draws depend only on the
// embedding seed, so domains that share it share the gaze -> x mapping.
Dataset generate_domain(const SyntheticDomainConfig& cfg);

// Perturbs pitch and yaw of exactly round(ratio * N) uniformly chosen samples by
// independent N(0, sigma_deg) draws; pitch is clamped to +-90 deg and yaw
// wrapped into (-180, 180]. Flags are set on the chosen samples.
Dataset inject_label_noise(Dataset dataset, double ratio, double sigma_deg, std::uint64_t seed);

// Wraps an angle in radians into (-pi, pi].
double wrap_angle(double rad);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mgaze
