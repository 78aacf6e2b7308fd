#include "a4g/sampling.hpp"

#include <cmath>
#include <memory>

#include "a4g/rand.hpp"

namespace a4g {

void SamplerConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("SamplerConfig: eta must be in [0,1]");
}

SamplerConfig::Kind sampler_kind_from_string(const std::string& s) {
  if (s == "ddim") return SamplerConfig::Kind::Ddim;
  if (s == "euler") return SamplerConfig::Kind::Euler;
  throw std::invalid_argument("unknown sampler kind: " + s);
}

std::string to_string(SamplerConfig::Kind k) {
  return k == SamplerConfig::Kind::Ddim ? "ddim" : "euler";
}

Tensor euler_sample(const ModelFn& velocity, const Tensor& z_init, int64_t steps,
                    std::optional<int> cls) {
  if (steps < 1) throw std::invalid_argument("euler_sample: steps must be >= 1");
  Tensor z = z_init;
  for (int64_t i = 0; i < steps; ++i) {
    const double t0 = static_cast<double>(i) / static_cast<double>(steps);
    const double t1 = static_cast<double>(i + 1) / static_cast<double>(steps);
    z = add(z, mul(velocity(z, t0, cls), t1 - t0));
  }
  return z;
}

double ddim_sigma(const NoiseSchedule& sched, int64_t t, int64_t t_prev, double eta) {
  const double ab_t = sched.alpha_bar[static_cast<size_t>(t)];
  const double ab_p = sched.alpha_bar[static_cast<size_t>(t_prev)];
  return eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
}

Tensor ddim_sample(const ModelFn& eps_model, const Tensor& z_init, int64_t steps, double eta,
                   const NoiseSchedule& sched, std::optional<int> cls, Rng* noise_rng) {
  const int64_t T = sched.t_steps();
  if (steps < 1 || steps > T) {
    throw std::invalid_argument("ddim_sample: steps must be in [1, t_steps]");
  }
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("ddim_sample: eta must be in [0,1]");
  if (eta > 0.0 && noise_rng == nullptr) {
    throw std::invalid_argument("ddim_sample: eta > 0 requires a noise rng");
  }

  // uniform stride through the schedule, first entry T, last entry 0
  std::vector<int64_t> times(static_cast<size_t>(steps) + 1);
  for (int64_t i = 0; i <= steps; ++i) {
    times[static_cast<size_t>(i)] = static_cast<int64_t>(
        std::llround(static_cast<double>(T) * static_cast<double>(steps - i) / static_cast<double>(steps)));
  }

  Tensor x = z_init;
  for (int64_t i = 0; i < steps; ++i) {
    const int64_t t = times[static_cast<size_t>(i)];
    const int64_t tp = times[static_cast<size_t>(i + 1)];
    const double ab_t = sched.alpha_bar[static_cast<size_t>(t)];
    const double ab_p = sched.alpha_bar[static_cast<size_t>(tp)];

    const Tensor eps_hat = eps_model(x, static_cast<double>(t), cls);
    const Tensor x0_hat = mul(sub(x, mul(eps_hat, std::sqrt(1.0 - ab_t))), 1.0 / std::sqrt(ab_t));

    const double sigma = eta == 0.0 ? 0.0 : ddim_sigma(sched, t, tp, eta);
    const double dir_scale = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
    x = add(mul(x0_hat, std::sqrt(ab_p)), mul(eps_hat, dir_scale));
    if (sigma > 0.0) {
      std::vector<double> noise(static_cast<size_t>(x.size()));
      fill_normal(*noise_rng, noise);
      x = add(x, mul(Tensor(x.shape(), std::move(noise)), sigma));
    }
  }
  return x;
}

ModelFn flow_model_fn(const VDiTModel& model) {
  auto bound = std::make_shared<BoundModel>(bind(model, nullptr));
  return [bound](const Tensor& z, double t, std::optional<int> cls) {
    return forward(*bound, z, t * kFlowTimeScale, cls).prediction;
  };
}

ModelFn diffusion_model_fn(const VDiTModel& model) {
  auto bound = std::make_shared<BoundModel>(bind(model, nullptr));
  return [bound](const Tensor& z, double t, std::optional<int> cls) {
    return forward(*bound, z, t, cls).prediction;
  };
}

Manifest generate_batch(const VDiTModel& model, const GenerateConfig& cfg,
                        const std::filesystem::path& out_dir) {
  cfg.sampler.validate();
  if (cfg.n < 0) throw std::invalid_argument("generate_batch: n must be >= 0");
  for (int cls : cfg.class_ids) {
    if (cls < 0 || cls >= model.config.num_classes) {
      throw std::invalid_argument("generate_batch: class id out of range");
    }
  }
  std::filesystem::create_directories(out_dir);

  const ModelFn fn = cfg.objective == Objective::Flow ? flow_model_fn(model)
                                                      : diffusion_model_fn(model);
  NoiseSchedule sched;
  if (cfg.objective == Objective::Diffusion) {
    sched = NoiseSchedule::linear(cfg.t_steps, cfg.beta_start, cfg.beta_end);
  }

  const Shape latent_shape{model.config.frames, model.config.latent_h, model.config.latent_w,
                           model.config.latent_c};
  Manifest m;
  for (int64_t i = 0; i < cfg.n; ++i) {
    Rng rng = make_rng(cfg.sampler.seed, static_cast<uint64_t>(i));
    std::vector<double> init(static_cast<size_t>(shape_size(latent_shape)));
    fill_normal(rng, init);
    const Tensor z_init(latent_shape, std::move(init));

    std::optional<int> cls;
    if (!cfg.class_ids.empty()) {
      cls = cfg.class_ids[static_cast<size_t>(i) % cfg.class_ids.size()];
    }

    Tensor clip;
    if (cfg.objective == Objective::Flow) {
      clip = euler_sample(fn, z_init, cfg.sampler.steps, cls);
    } else {
      clip = ddim_sample(fn, z_init, cfg.sampler.steps, cfg.sampler.eta, sched, cls, &rng);
    }

    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04lld.a4gt", static_cast<long long>(i));
    write_tensor(out_dir / name, clip);
    m.items.push_back(ManifestItem{name, cls.value_or(0), static_cast<int>(i)});
  }
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace a4g
