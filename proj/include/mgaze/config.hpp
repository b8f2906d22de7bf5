#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mgaze/data.hpp"
#include "mgaze/trainer.hpp"

namespace mgaze {

struct NoiseConfig {
  double ratio = 0.0;
  double sigma_deg = 60.0;
  std::uint64_t seed = 5;
};

// Training keys live at the top level; [source], [target] and [noise] are tables.
struct ExperimentConfig {
  TrainConfig train;
  SyntheticDomainConfig source;
  SyntheticDomainConfig target = default_target_domain();
  NoiseConfig noise;

  static SyntheticDomainConfig default_target_domain();
};

void validate(const ExperimentConfig& cfg);

// TOML, or JSON when the extension is .json. Unknown keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_toml_config(std::string_view text);
ExperimentConfig parse_json_config(std::string_view text);

// "key=value" with dotted keys for tables, e.g. "source.n_samples=2000".
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

// Every recognised key, dotted for table members.
std::vector<std::string> config_keys();

std::string to_toml(const ExperimentConfig& cfg);

// FNV-1a over to_toml().
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace mgaze
