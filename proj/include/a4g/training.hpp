#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "a4g/io.hpp"
#include "a4g/tensor.hpp"
#include "a4g/vdit.hpp"

namespace a4g {

/// Training halted on a non-finite loss.
struct DivergedError : std::runtime_error {
  int64_t step;
  explicit DivergedError(int64_t s)
      : std::runtime_error("training diverged at step " + std::to_string(s)), step(s) {}
};

struct NoiseSchedule {
  std::vector<double> beta;       // beta[t], t in [1, t_steps]; beta[0] unused
  std::vector<double> alpha_bar;  // alpha_bar[0] = 1, strictly decreasing

  int64_t t_steps() const { return static_cast<int64_t>(beta.size()) - 1; }
  static NoiseSchedule linear(int64_t t_steps = 1000, double beta_start = 1e-4,
                              double beta_end = 0.02);
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Tensor diffuse(const Tensor& x0, int64_t t, const Tensor& eps, const NoiseSchedule& sched);

enum class Objective { Diffusion, Flow };
Objective objective_from_string(const std::string& s);
std::string to_string(Objective o);

enum class AlignDistance { Cosine, SquaredL2 };
AlignDistance align_distance_from_string(const std::string& s);
std::string to_string(AlignDistance d);

/// Flow times live in [0,1]; the model's conditioning time is scaled so the
/// sinusoidal embedding resolves it (same constant at train and inference).
constexpr double kFlowTimeScale = 1000.0;

Tensor mse(const Tensor& target, const Tensor& pred);

Tensor diffusion_loss(const BoundModel& m, const Tensor& x0, int64_t t, const Tensor& eps,
                      const NoiseSchedule& sched, std::optional<int> class_id = std::nullopt);

/// x_t = (1-t) eps + t x0; the target velocity x0 - eps is constant in t.
std::pair<Tensor, Tensor> flow_interpolate(const Tensor& x0, const Tensor& eps, double t);

Tensor flow_loss(const BoundModel& m, const Tensor& x0, const Tensor& eps, double t,
                 std::optional<int> class_id = std::nullopt);

/// Per-token L2 normalization of each map, then channel concatenation.
FeatureMap fuse_features(const std::vector<FeatureMap>& maps);

/// Shared projection MLP: token dim -> 2*target (GELU) -> 2*target (GELU)
/// -> target. Present only during training.
ParamMap init_alignment_head(int64_t token_dim, int64_t target_dim, uint64_t seed);
ParamMap bind_params(const ParamMap& params, Tape* tape);
Tensor apply_alignment_head(const ParamMap& bound_head, const Tensor& tokens);

struct AlignmentLoss {
  Tensor loss;          // tracked scalar
  double mean_cosine;   // mean over tokens, for logging
};

AlignmentLoss alignment_loss(const Tensor& hidden_tokens, const ParamMap& bound_head,
                             const FeatureMap& fused, AlignDistance dist = AlignDistance::Cosine);

Tensor total_loss(const Tensor& denoise, const Tensor& align, double gamma);

struct AdamState {
  int64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

void adam_step(ParamMap& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainConfig {
  Objective objective = Objective::Flow;
  double gamma = 0.5;
  int64_t align_depth = -1;  // -1 = mid depth (depth/2)
  Placement align_placement = Placement::Spatial;
  int64_t batch_size = 8;
  int64_t steps = 500;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  int64_t t_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  AlignDistance align_distance = AlignDistance::Cosine;
  std::vector<OracleEncoder> encoders;
  int64_t checkpoint_every = 0;  // 0 = none until the final step

  int64_t resolved_align_depth(const VDiTConfig& mcfg) const;
  void validate(const VDiTConfig& mcfg) const;
};

struct TrainLogRow {
  int64_t step = 0;
  double denoise = 0;
  double align = 0;
  double total = 0;
  double cosine = 0;
};

struct TrainResult {
  VDiTModel model;
  ParamMap head;
  AdamState opt;
  std::vector<TrainLogRow> log;
};

using CheckpointHook = std::function<void(int64_t step, const VDiTModel&, const ParamMap& head)>;

/// Algorithm: per step sample batch, times, and noise; denoising loss plus
/// gamma-weighted alignment of hidden tokens against fused encoder features
/// of the clean clips; one Adam update over model and head.
TrainResult train(const VDiTConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<SyntheticClip>& dataset,
                  const CheckpointHook& hook = nullptr);

/// Mean denoising loss over a fixed evaluation set; (t, eps) pairs are
/// derived from eval_seed alone so paired runs see identical draws.
double heldout_denoise_loss(const VDiTModel& model, const TrainConfig& tcfg,
                            const std::vector<SyntheticClip>& clips, uint64_t eval_seed);

}  // namespace a4g
