#pragma once

#include <cstdint>
#include <filesystem>

#include "mgaze/model.hpp"
#include "mgaze/trainer.hpp"

namespace mgaze {

struct Checkpoint {
  ModelState model;
  PrototypeBank bank;
  std::uint64_t config_hash = 0;
  long epoch = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t shuffle_seed = 0;
};

// Plain text with hexfloat values, so a save/load round trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mgaze
