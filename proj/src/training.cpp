#include "a4g/training.hpp"

#include <algorithm>
#include <cmath>

#include "a4g/rand.hpp"

namespace a4g {

NoiseSchedule NoiseSchedule::linear(int64_t t_steps, double beta_start, double beta_end) {
  if (t_steps < 1) throw std::invalid_argument("NoiseSchedule: t_steps must be >= 1");
  if (beta_start <= 0 || beta_end >= 1 || beta_start > beta_end) {
    throw std::invalid_argument("NoiseSchedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta.resize(static_cast<size_t>(t_steps) + 1, 0.0);
  s.alpha_bar.resize(static_cast<size_t>(t_steps) + 1, 1.0);
  for (int64_t t = 1; t <= t_steps; ++t) {
    const double frac = t_steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(t_steps - 1);
    s.beta[static_cast<size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bar[static_cast<size_t>(t)] =
        s.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - s.beta[static_cast<size_t>(t)]);
  }
  return s;
}

Tensor diffuse(const Tensor& x0, int64_t t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.t_steps()) {
    throw std::invalid_argument("diffuse: t out of schedule range");
  }
  if (!same_shape(x0.shape(), eps.shape())) {
    throw std::invalid_argument("diffuse: x0 and eps shapes differ");
  }
  const double ab = sched.alpha_bar[static_cast<size_t>(t)];
  return add(mul(x0, std::sqrt(ab)), mul(eps, std::sqrt(1.0 - ab)));
}

Objective objective_from_string(const std::string& s) {
  if (s == "diffusion") return Objective::Diffusion;
  if (s == "flow") return Objective::Flow;
  throw std::invalid_argument("unknown objective: " + s);
}

std::string to_string(Objective o) { return o == Objective::Diffusion ? "diffusion" : "flow"; }

AlignDistance align_distance_from_string(const std::string& s) {
  if (s == "cosine") return AlignDistance::Cosine;
  if (s == "squared-l2") return AlignDistance::SquaredL2;
  throw std::invalid_argument("unknown align distance: " + s);
}

std::string to_string(AlignDistance d) {
  return d == AlignDistance::Cosine ? "cosine" : "squared-l2";
}

Tensor mse(const Tensor& target, const Tensor& pred) {
  Tensor diff = sub(target, pred);
  return mean(mul(diff, diff));
}

Tensor diffusion_loss(const BoundModel& m, const Tensor& x0, int64_t t, const Tensor& eps,
                      const NoiseSchedule& sched, std::optional<int> class_id) {
  const Tensor xt = diffuse(x0, t, eps, sched);
  return mse(eps, forward(m, xt, static_cast<double>(t), class_id).prediction);
}

std::pair<Tensor, Tensor> flow_interpolate(const Tensor& x0, const Tensor& eps, double t) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("flow_interpolate: t must be in [0,1]");
  if (!same_shape(x0.shape(), eps.shape())) {
    throw std::invalid_argument("flow_interpolate: x0 and eps shapes differ");
  }
  Tensor xt = add(mul(eps, 1.0 - t), mul(x0, t));
  Tensor velocity = sub(x0, eps);
  return {std::move(xt), std::move(velocity)};
}

Tensor flow_loss(const BoundModel& m, const Tensor& x0, const Tensor& eps, double t,
                 std::optional<int> class_id) {
  auto [xt, velocity] = flow_interpolate(x0, eps, t);
  return mse(velocity, forward(m, xt, t * kFlowTimeScale, class_id).prediction);
}

// ---------------------------------------------------------------------------
// fusion + alignment

FeatureMap fuse_features(const std::vector<FeatureMap>& maps) {
  if (maps.empty()) throw std::invalid_argument("fuse_features: no feature maps");
  const int64_t T = maps[0].frames, h = maps[0].grid_h, w = maps[0].grid_w;
  int64_t c_total = 0;
  for (const auto& fm : maps) {
    if (fm.frames != T || fm.grid_h != h || fm.grid_w != w) {
      throw std::invalid_argument("fuse_features: feature maps disagree on T,h,w");
    }
    c_total += fm.channels;
  }
  const int64_t n = T * h * w;
  std::vector<double> out(static_cast<size_t>(n * c_total));
  int64_t offset = 0;
  for (const auto& fm : maps) {
    const int64_t c = fm.channels;
    const auto& v = fm.values.values();
    for (int64_t i = 0; i < n; ++i) {
      double norm = 0;
      for (int64_t j = 0; j < c; ++j) {
        const double x = v[static_cast<size_t>(i * c + j)];
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) throw std::domain_error("fuse_features: zero-norm token vector");
      for (int64_t j = 0; j < c; ++j) {
        out[static_cast<size_t>(i * c_total + offset + j)] = v[static_cast<size_t>(i * c + j)] / norm;
      }
    }
    offset += c;
  }
  return FeatureMap::from_tensor(Tensor({T, h, w, c_total}, std::move(out)));
}

ParamMap init_alignment_head(int64_t token_dim, int64_t target_dim, uint64_t seed) {
  if (token_dim < 1 || target_dim < 1) throw std::invalid_argument("init_alignment_head: bad dims");
  const int64_t hidden = 2 * target_dim;
  Rng rng = make_rng(seed, 0x68656164);  // "head"
  ParamMap p;
  auto weight = [&](const std::string& name, Shape shape) {
    std::vector<double> v(static_cast<size_t>(shape_size(shape)));
    fill_truncated_normal(rng, v, 0.0, 0.02);
    p.emplace(name, Tensor(std::move(shape), std::move(v)));
  };
  weight("head.w1", {token_dim, hidden});
  p.emplace("head.b1", Tensor::zeros({hidden}));
  weight("head.w2", {hidden, hidden});
  p.emplace("head.b2", Tensor::zeros({hidden}));
  weight("head.w3", {hidden, target_dim});
  p.emplace("head.b3", Tensor::zeros({target_dim}));
  return p;
}

ParamMap bind_params(const ParamMap& params, Tape* tape) {
  ParamMap out;
  for (const auto& [name, t] : params) out.emplace(name, tape != nullptr ? tape->leaf(t) : t);
  return out;
}

Tensor apply_alignment_head(const ParamMap& head, const Tensor& tokens) {
  Tensor h = add_rowwise(matmul(tokens, head.at("head.w1")), head.at("head.b1"));
  h = gelu(h);
  h = add_rowwise(matmul(h, head.at("head.w2")), head.at("head.b2"));
  h = gelu(h);
  return add_rowwise(matmul(h, head.at("head.w3")), head.at("head.b3"));
}

AlignmentLoss alignment_loss(const Tensor& hidden_tokens, const ParamMap& head,
                             const FeatureMap& fused, AlignDistance dist) {
  const int64_t n = fused.frames * fused.grid_h * fused.grid_w;
  if (hidden_tokens.rank() != 2 || hidden_tokens.dim(0) != n) {
    throw std::invalid_argument("alignment_loss: hidden token grid does not match fused grid");
  }
  const Tensor targets = fused.tokens().detached();  // [n, c_total], constant
  const Tensor proj = apply_alignment_head(head, hidden_tokens);
  if (proj.dim(1) != targets.dim(1)) {
    throw std::invalid_argument("alignment_loss: head output dim does not match fused channels");
  }

  const Tensor proj_sq = sum(mul(proj, proj), {1});
  for (double v : proj_sq.values()) {
    if (v == 0.0) throw std::domain_error("alignment_loss: zero-norm projected token");
  }
  const Tensor proj_norm = sqrt(proj_sq);
  const Tensor target_norm = sqrt(sum(mul(targets, targets), {1}));  // untracked
  const Tensor cos = div(sum(mul(proj, targets), {1}), mul(proj_norm, target_norm));
  const Tensor mean_cos = mean(cos);

  AlignmentLoss out;
  out.mean_cosine = mean_cos.value();
  if (dist == AlignDistance::Cosine) {
    out.loss = sub(1.0, mean_cos);
  } else {
    out.loss = mse(targets, proj);
  }
  return out;
}

Tensor total_loss(const Tensor& denoise, const Tensor& align, double gamma) {
  if (gamma < 0) throw std::invalid_argument("total_loss: gamma must be >= 0");
  return add(denoise, mul(align, gamma));
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(ParamMap& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (!same_shape(g.shape(), p.shape())) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    }
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(static_cast<size_t>(p.size()), 0.0);
    if (v.empty()) v.assign(static_cast<size_t>(p.size()), 0.0);

    std::vector<double> next = p.values();
    const auto& gv = g.values();
    for (size_t i = 0; i < next.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * gv[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * gv[i] * gv[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      next[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    p = Tensor(p.shape(), std::move(next));
  }
}

// ---------------------------------------------------------------------------
// training loop

int64_t TrainConfig::resolved_align_depth(const VDiTConfig& mcfg) const {
  return align_depth < 0 ? mcfg.depth / 2 : align_depth;
}

void TrainConfig::validate(const VDiTConfig& mcfg) const {
  mcfg.validate();
  if (gamma < 0) throw std::invalid_argument("TrainConfig: gamma must be >= 0");
  if (batch_size < 1 || steps < 0) throw std::invalid_argument("TrainConfig: degenerate loop sizes");
  if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  const int64_t depth = resolved_align_depth(mcfg);
  if (depth < 0 || depth >= mcfg.depth) {
    throw std::invalid_argument("TrainConfig: align_depth must be < model depth");
  }
  if (encoders.empty()) throw std::invalid_argument("TrainConfig: needs at least one encoder");
  for (const auto& enc : encoders) {
    // hidden tokens and encoder grid must coincide one-to-one; resampling
    // between mismatched grids is rejected
    if (enc.stride < 1 || mcfg.latent_h % enc.stride != 0 || mcfg.latent_w % enc.stride != 0 ||
        mcfg.latent_h / enc.stride != mcfg.latent_h / mcfg.patch_size ||
        mcfg.latent_w / enc.stride != mcfg.latent_w / mcfg.patch_size) {
      throw std::invalid_argument(
          "TrainConfig: encoder grid does not match the model token grid (stride vs patch_size)");
    }
  }
  if (objective == Objective::Diffusion && t_steps < 1) {
    throw std::invalid_argument("TrainConfig: t_steps must be >= 1");
  }
}

namespace {

int64_t fusion_target_dim(const TrainConfig& cfg) {
  int64_t d = 0;
  for (const auto& enc : cfg.encoders) d += enc.out_channels;
  return d;
}

FeatureMap fused_features_of(const TrainConfig& cfg, const Tensor& clip) {
  std::vector<FeatureMap> maps;
  maps.reserve(cfg.encoders.size());
  for (const auto& enc : cfg.encoders) maps.push_back(encode(enc, clip));
  return fuse_features(maps);
}

}  // namespace

TrainResult train(const VDiTConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<SyntheticClip>& dataset, const CheckpointHook& hook) {
  tcfg.validate(mcfg);
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  for (const auto& clip : dataset) {
    if (clip.video.dim(0) != mcfg.frames || clip.video.dim(1) != mcfg.latent_h ||
        clip.video.dim(2) != mcfg.latent_w || clip.video.dim(3) != mcfg.latent_c) {
      throw std::invalid_argument("train: clip shape does not match model config");
    }
  }

  const NoiseSchedule sched = NoiseSchedule::linear(tcfg.t_steps, tcfg.beta_start, tcfg.beta_end);
  const int64_t align_depth = tcfg.resolved_align_depth(mcfg);

  TrainResult res;
  res.model = init_params(mcfg, tcfg.seed);
  res.head = init_alignment_head(mcfg.hidden_dim, fusion_target_dim(tcfg), tcfg.seed);

  Rng rng = make_rng(tcfg.seed, 0x74726169);  // "trai"
  std::uniform_int_distribution<int64_t> clip_dist(0, static_cast<int64_t>(dataset.size()) - 1);
  std::uniform_int_distribution<int64_t> t_dist(1, sched.t_steps());
  std::uniform_real_distribution<double> flow_t_dist(0.0, 1.0);

  const int64_t latent_elems = mcfg.frames * mcfg.latent_h * mcfg.latent_w * mcfg.latent_c;

  for (int64_t step = 1; step <= tcfg.steps; ++step) {
    try {
      Tape tape;
      BoundModel bm = bind(res.model, &tape);
      ParamMap bh = bind_params(res.head, &tape);

      Tensor denoise_sum = Tensor::scalar(0.0);
      Tensor align_sum = Tensor::scalar(0.0);
      double cosine_sum = 0;
      for (int64_t b = 0; b < tcfg.batch_size; ++b) {
        const SyntheticClip& sample = dataset[static_cast<size_t>(clip_dist(rng))];
        std::optional<int> cls;
        if (mcfg.num_classes > 0) cls = sample.class_id;

        std::vector<double> noise(static_cast<size_t>(latent_elems));
        fill_normal(rng, noise);
        const Tensor eps(sample.video.shape(), std::move(noise));

        Tensor xt;
        Tensor target;
        double time_value = 0;
        if (tcfg.objective == Objective::Diffusion) {
          const int64_t t = t_dist(rng);
          xt = diffuse(sample.video, t, eps, sched);
          target = eps;
          time_value = static_cast<double>(t);
        } else {
          const double t = flow_t_dist(rng);
          auto [x, v] = flow_interpolate(sample.video, eps, t);
          xt = std::move(x);
          target = std::move(v);
          time_value = t * kFlowTimeScale;
        }

        const ForwardResult fwd = forward(bm, xt, time_value, cls);
        denoise_sum = add(denoise_sum, mse(target, fwd.prediction));

        const FeatureMap fused = fused_features_of(tcfg, sample.video);
        const AlignmentLoss al =
            alignment_loss(fwd.hidden(align_depth, tcfg.align_placement), bh, fused,
                           tcfg.align_distance);
        align_sum = add(align_sum, al.loss);
        cosine_sum += al.mean_cosine;
      }

      const double inv_b = 1.0 / static_cast<double>(tcfg.batch_size);
      const Tensor denoise = mul(denoise_sum, inv_b);
      const Tensor align = mul(align_sum, inv_b);
      const Tensor total = total_loss(denoise, align, tcfg.gamma);

      TrainLogRow row;
      row.step = step;
      row.denoise = denoise.value();
      row.align = align.value();
      row.total = total.value();
      row.cosine = cosine_sum * inv_b;
      res.log.push_back(row);

      tape.backward(total);

      std::map<std::string, Tensor> grads;
      for (const auto& [name, t] : bm.params) grads.emplace(name, tape.grad(t));
      for (const auto& [name, t] : bh) grads.emplace(name, tape.grad(t));

      // model and head update as one parameter collection (one Adam step)
      ParamMap all = res.model.params;
      for (const auto& [name, t] : res.head) all.emplace(name, t);
      adam_step(all, grads, res.opt, tcfg.learning_rate);
      for (auto& [name, t] : res.model.params) t = all.at(name);
      for (auto& [name, t] : res.head) t = all.at(name);
    } catch (const NonFiniteError&) {
      throw DivergedError(step);
    }

    if (hook && ((tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0) ||
                 step == tcfg.steps)) {
      hook(step, res.model, res.head);
    }
  }
  return res;
}

double heldout_denoise_loss(const VDiTModel& model, const TrainConfig& tcfg,
                            const std::vector<SyntheticClip>& clips, uint64_t eval_seed) {
  if (clips.empty()) throw std::invalid_argument("heldout_denoise_loss: empty evaluation set");
  const NoiseSchedule sched = NoiseSchedule::linear(tcfg.t_steps, tcfg.beta_start, tcfg.beta_end);
  const BoundModel bm = bind(model, nullptr);
  const int64_t latent_elems = model.config.frames * model.config.latent_h * model.config.latent_w *
                               model.config.latent_c;

  double acc = 0;
  for (size_t i = 0; i < clips.size(); ++i) {
    Rng rng = make_rng(eval_seed, static_cast<uint64_t>(i));
    std::vector<double> noise(static_cast<size_t>(latent_elems));
    fill_normal(rng, noise);
    const Tensor eps(clips[i].video.shape(), std::move(noise));
    std::optional<int> cls;
    if (model.config.num_classes > 0) cls = clips[i].class_id;

    if (tcfg.objective == Objective::Diffusion) {
      std::uniform_int_distribution<int64_t> t_dist(1, sched.t_steps());
      const int64_t t = t_dist(rng);
      acc += diffusion_loss(bm, clips[i].video, t, eps, sched, cls).value();
    } else {
      std::uniform_real_distribution<double> t_dist(0.0, 1.0);
      const double t = t_dist(rng);
      acc += flow_loss(bm, clips[i].video, eps, t, cls).value();
    }
  }
  return acc / static_cast<double>(clips.size());
}

}  // namespace a4g
