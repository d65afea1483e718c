#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "featsharp/grid.hpp"

namespace featsharp {

class UpsamplerModel;

inline constexpr uint32_t kCheckpointVersion = 1;

/// Versioned binary container: magic "FSKP", little-endian, a u32 version,
/// run metadata, then length-prefixed named tensors. Round-trips bit-exactly.
struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  uint64_t step = 0;
  uint64_t config_digest = 0;
  std::vector<std::pair<std::string, Grid>> tensors;

  const Grid* find(const std::string& name) const;

  static Checkpoint from_model(const UpsamplerModel& model, uint64_t step);
  /// Writes every named tensor back into the model's parameters and PHI-S
  /// statistics; unknown or missing names and shape mismatches are errors.
  void apply_to(UpsamplerModel& model) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace featsharp
