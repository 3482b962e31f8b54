/**
 * @file checkpoint.hpp
 * @brief Versioned single-file container for model parameters and optimizer state.
 *
 * Layout: 8-byte magic "SEGAECKP", u32 version, u64 header length, a JSON
 * header (configs, epoch, array sizes), then every parameter array and both
 * Adam moment arrays as little-endian float64 in ModelParameters::arrays() order.
 */
#pragma once

#include <filesystem>
#include <optional>

#include "segae/model.hpp"
#include "segae/trainer.hpp"

namespace segae {

struct Checkpoint {
  ModelParameters params;
  std::optional<OptimizerState> optimizer;
  TrainConfig train_config;
  /// Number of completed epochs.
  int epochs_completed = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws FormatError on a corrupt file and ConfigError when
/// `expected_model` is given and differs from the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected_model = std::nullopt);

}  // namespace segae
