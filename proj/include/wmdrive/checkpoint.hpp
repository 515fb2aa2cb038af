#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wmdrive/config.hpp"
#include "wmdrive/model.hpp"
#include "wmdrive/nn.hpp"

namespace wmdrive {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: 8-byte magic, u32 version, u64 header length, JSON header, then
// float32 little-endian tensors in header order. Training keeps every stored
// value float-representable, so save -> load -> save is byte-identical.

struct Checkpoint {
  RunConfig config;
  Model model;
  int stage{1};
  std::int64_t step{0};
  std::int64_t adam_steps{0};
  std::vector<nn::Param> adam_m;  // empty when no optimizer state was saved
  std::vector<nn::Param> adam_v;
};

/// adam may be null (e.g. a freshly initialized model).
void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const Model& model, int stage,
                     std::int64_t step, const nn::Adam* adam);

/// Throws LoadError naming the offending field; the frozen encoder is rebuilt from
/// its seed and must match the stored checksum.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies saved moments and step count into an optimizer over the same tensors.
void restore_optimizer(const Checkpoint& ck, nn::Adam& adam);

}  // namespace wmdrive
