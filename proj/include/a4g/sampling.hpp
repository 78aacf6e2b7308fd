#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "a4g/io.hpp"
#include "a4g/rand.hpp"
#include "a4g/tensor.hpp"
#include "a4g/training.hpp"
#include "a4g/vdit.hpp"

namespace a4g {

/// Model prediction at (state, sampler-native time, class). Euler passes
/// flow time in [0,1]; DDIM passes the schedule step index.
using ModelFn = std::function<Tensor(const Tensor& z, double t, std::optional<int> cls)>;

struct SamplerConfig {
  enum class Kind { Ddim, Euler };
  Kind kind = Kind::Euler;
  int64_t steps = 50;
  uint64_t seed = 0;
  double eta = 0.0;  // DDIM stochasticity

  void validate() const;
};

SamplerConfig::Kind sampler_kind_from_string(const std::string& s);
std::string to_string(SamplerConfig::Kind k);

/// Integrates dz/dt = v(z,t) from the noise end (t=0) to the data end (t=1)
/// with steps uniform Euler updates. Exact for constant velocity fields.
Tensor euler_sample(const ModelFn& velocity, const Tensor& z_init, int64_t steps,
                    std::optional<int> cls = std::nullopt);

/// DDIM noise scale for the jump t -> t_prev.
double ddim_sigma(const NoiseSchedule& sched, int64_t t, int64_t t_prev, double eta);

/// DDIM over a uniform-stride subsequence of the schedule, final step to
/// t=0. eta=0 is deterministic; eta>0 draws from noise_rng.
Tensor ddim_sample(const ModelFn& eps_model, const Tensor& z_init, int64_t steps, double eta,
                   const NoiseSchedule& sched, std::optional<int> cls = std::nullopt,
                   Rng* noise_rng = nullptr);

/// Adapters from a trained model to the sampler callables.
ModelFn flow_model_fn(const VDiTModel& model);
ModelFn diffusion_model_fn(const VDiTModel& model);

struct GenerateConfig {
  SamplerConfig sampler;
  Objective objective = Objective::Flow;
  int64_t n = 8;
  int64_t t_steps = 1000;  // DDIM schedule
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::vector<int> class_ids;  // cycled over samples; empty = null class
};

/// n sampled clips written as tensor files plus a manifest; per-sample RNG
/// streams derive from (seed, sample index).
Manifest generate_batch(const VDiTModel& model, const GenerateConfig& cfg,
                        const std::filesystem::path& out_dir);

}  // namespace a4g
