#ifndef SSLFORGE_MODELS_CHECKPOINT_H_
#define SSLFORGE_MODELS_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sslforge/models/params.h"

namespace sslforge {

struct Checkpoint {
  std::string spec_hash;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  ParamSet student;
  std::optional<ParamSet> teacher;
  std::vector<double> center;
};

// Directory layout: manifest.txt plus one tensor dump per parameter.
//   sslforge-checkpoint 1
//   spec_hash <hex>
//   step <n>
//   seed <n>
//   tensor <student|teacher|center> <name> <decay 0|1> <file>
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace sslforge

#endif  // SSLFORGE_MODELS_CHECKPOINT_H_
