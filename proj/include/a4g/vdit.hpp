#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "a4g/tensor.hpp"

namespace a4g {

struct VDiTConfig {
  int64_t depth = 4;        // N pairs of (spatial, temporal) blocks
  int64_t hidden_dim = 64;  // D
  int64_t heads = 4;
  int64_t patch_size = 2;
  int64_t frames = 4;
  int64_t latent_h = 8;
  int64_t latent_w = 8;
  int64_t latent_c = 4;
  int64_t num_classes = 0;      // 0 = unconditional
  int64_t time_embed_dim = 64;  // sinusoidal frequency width, even

  int64_t tokens_per_frame() const { return (latent_h / patch_size) * (latent_w / patch_size); }
  int64_t token_dim() const { return patch_size * patch_size * latent_c; }
  void validate() const;
  bool operator==(const VDiTConfig&) const = default;
};

using ParamMap = std::map<std::string, Tensor>;

struct VDiTModel {
  VDiTConfig config;
  ParamMap params;
};

/// Truncated-normal(0, 0.02) weights, zero biases; AdaLN modulation layers
/// and the final projection zero-initialized so the model starts as an
/// identity-residual stack predicting zero.
VDiTModel init_params(const VDiTConfig& cfg, uint64_t seed);

/// Total parameter element count, derived from the config alone.
int64_t param_count(const VDiTConfig& cfg);

/// Frame-wise lossless rearrangement [T,h,w,c] -> [T, (h/p)(w/p), p*p*c].
Tensor patchify(const Tensor& latent, int64_t p);
Tensor unpatchify(const Tensor& tokens, int64_t p, int64_t h, int64_t w, int64_t c);

enum class Placement { Spatial, Temporal };

Placement placement_from_string(const std::string& s);
std::string to_string(Placement p);

struct ForwardResult {
  Tensor prediction;                  // [T,h,w,c]
  std::vector<Tensor> post_spatial;   // per depth, [T*Ntok, D]
  std::vector<Tensor> post_temporal;  // per depth, [T*Ntok, D]

  const Tensor& hidden(int64_t depth, Placement place) const;
};

/// Model parameters registered on a tape (or detached when tape == nullptr,
/// for inference). Keeps the forward pass independent of where gradients go.
struct BoundModel {
  const VDiTConfig* config = nullptr;
  ParamMap params;
  Tape* tape = nullptr;
};

BoundModel bind(const VDiTModel& model, Tape* tape);

/// One clip through the transformer. `time_value` is the raw conditioning
/// time (diffusion step index, or flow time scaled by the caller).
ForwardResult forward(const BoundModel& m, const Tensor& noisy_latent, double time_value,
                      std::optional<int> class_id = std::nullopt);

/// Sinusoidal time embedding row vector [1, dim].
Tensor time_embedding(double time_value, int64_t dim);

// ---- checkpointing: one tensor file per named parameter + JSON header ----

struct Checkpoint {
  VDiTModel model;
  ParamMap extras;  // optimizer state, alignment head, counters
};

void save_checkpoint(const std::filesystem::path& dir, const VDiTModel& model,
                     const ParamMap& extras = {});
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace a4g
