#include "a4g/ablation.hpp"

#include <algorithm>
#include <cstdio>

namespace a4g {

AblationResult run_ablation_grid(const VDiTConfig& mcfg, const TrainConfig& base,
                                 const std::vector<SyntheticClip>& dataset,
                                 std::vector<int64_t> depths) {
  if (depths.empty()) {
    depths = {mcfg.depth / 3, mcfg.depth / 2};
  }
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());

  AblationResult res;
  std::string csv = "objective,align_depth,placement,final_denoise,final_align,final_total,"
                    "final_cosine,heldout_denoise\n";
  for (Objective obj : {Objective::Diffusion, Objective::Flow}) {
    for (int64_t depth : depths) {
      for (Placement place : {Placement::Spatial, Placement::Temporal}) {
        TrainConfig cell_cfg = base;
        cell_cfg.objective = obj;
        cell_cfg.align_depth = depth;
        cell_cfg.align_placement = place;

        TrainResult tr = train(mcfg, cell_cfg, dataset);
        AblationCell cell;
        cell.objective = obj;
        cell.align_depth = depth;
        cell.placement = place;
        cell.final_row = tr.log.empty() ? TrainLogRow{} : tr.log.back();
        cell.heldout_denoise =
            heldout_denoise_loss(tr.model, cell_cfg, dataset, cell_cfg.seed + 0x9e3779b9ULL);
        res.cells.push_back(cell);

        char line[256];
        std::snprintf(line, sizeof(line), "%s,%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      to_string(obj).c_str(), static_cast<long long>(depth),
                      to_string(place).c_str(), cell.final_row.denoise, cell.final_row.align,
                      cell.final_row.total, cell.final_row.cosine, cell.heldout_denoise);
        csv += line;
      }
    }
  }
  res.csv = std::move(csv);
  return res;
}

}  // namespace a4g
