#pragma once

#include <string>
#include <vector>

#include "a4g/training.hpp"

namespace a4g {

struct AblationCell {
  Objective objective;
  int64_t align_depth;
  Placement placement;
  TrainLogRow final_row;
  double heldout_denoise;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::string csv;  // deterministic; no timestamps
};

/// Trains one short run per grid cell (objective x align depth x placement)
/// from the shared base config and reports final losses plus a held-out
/// denoising loss. Depth defaults to {N/3, N/2}.
AblationResult run_ablation_grid(const VDiTConfig& mcfg, const TrainConfig& base,
                                 const std::vector<SyntheticClip>& dataset,
                                 std::vector<int64_t> depths = {});

}  // namespace a4g
