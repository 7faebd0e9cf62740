#pragma once

#include <filesystem>

#include "lossmix/trainer.hpp"

namespace lossmix {

/// Parameter checkpoint: JSON document of named arrays with shape headers,
/// versioned by the magic string "LMIXCKPT1".
///
///   {"magic": "LMIXCKPT1",
///    "params": {"denoiser.layer0.weight": {"shape": [32, 32],
///                                          "data": [...]}, ...}}
///
/// Loading is shape-checked against the target model and rejects unknown
/// magics.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
void load_checkpoint(const std::filesystem::path& path, Model& model);

}  // namespace lossmix
