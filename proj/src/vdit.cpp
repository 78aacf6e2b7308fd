#include "a4g/vdit.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "a4g/io.hpp"
#include "a4g/rand.hpp"

namespace a4g {

namespace {

constexpr double kLnEps = 1e-5;
constexpr int64_t kMlpRatio = 4;

std::string block_prefix(int64_t depth, Placement place) {
  return "blocks." + std::to_string(depth) + (place == Placement::Spatial ? ".spatial." : ".temporal.");
}

}  // namespace

void VDiTConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("VDiTConfig: depth must be >= 1");
  if (hidden_dim < 1 || heads < 1 || hidden_dim % heads != 0) {
    throw std::invalid_argument("VDiTConfig: hidden_dim must be divisible by heads");
  }
  if (patch_size < 1 || latent_h % patch_size != 0 || latent_w % patch_size != 0) {
    throw std::invalid_argument("VDiTConfig: latent h,w must be divisible by patch_size");
  }
  if (frames < 1 || latent_c < 1) throw std::invalid_argument("VDiTConfig: degenerate latent");
  if (num_classes < 0) throw std::invalid_argument("VDiTConfig: num_classes must be >= 0");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
    throw std::invalid_argument("VDiTConfig: time_embed_dim must be even and >= 2");
  }
}

Placement placement_from_string(const std::string& s) {
  if (s == "spatial") return Placement::Spatial;
  if (s == "temporal") return Placement::Temporal;
  throw std::invalid_argument("unknown placement: " + s);
}

std::string to_string(Placement p) { return p == Placement::Spatial ? "spatial" : "temporal"; }

// ---------------------------------------------------------------------------
// patchify

Tensor patchify(const Tensor& latent, int64_t p) {
  if (latent.rank() != 4) throw std::invalid_argument("patchify: expects [T,h,w,c]");
  const int64_t T = latent.dim(0), h = latent.dim(1), w = latent.dim(2), c = latent.dim(3);
  if (p < 1 || h % p != 0 || w % p != 0) {
    throw std::invalid_argument("patchify: h,w must be divisible by patch size");
  }
  const int64_t gh = h / p, gw = w / p;
  std::vector<int64_t> index;
  index.reserve(static_cast<size_t>(T * h * w * c));
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t gy = 0; gy < gh; ++gy) {
      for (int64_t gx = 0; gx < gw; ++gx) {
        for (int64_t dy = 0; dy < p; ++dy) {
          for (int64_t dx = 0; dx < p; ++dx) {
            for (int64_t ch = 0; ch < c; ++ch) {
              index.push_back(((t * h + gy * p + dy) * w + gx * p + dx) * c + ch);
            }
          }
        }
      }
    }
  }
  return gather_flat(latent, std::move(index), {T, gh * gw, p * p * c});
}

Tensor unpatchify(const Tensor& tokens, int64_t p, int64_t h, int64_t w, int64_t c) {
  if (tokens.rank() != 3) throw std::invalid_argument("unpatchify: expects [T,Ntok,p*p*c]");
  const int64_t T = tokens.dim(0);
  const int64_t gh = h / p, gw = w / p;
  if (tokens.dim(1) != gh * gw || tokens.dim(2) != p * p * c) {
    throw std::invalid_argument("unpatchify: token shape does not match target latent");
  }
  // index into the token layout for every latent element
  std::vector<int64_t> index;
  index.reserve(static_cast<size_t>(T * h * w * c));
  const int64_t tok_dim = p * p * c;
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const int64_t gy = y / p, dy = y % p, gx = x / p, dx = x % p;
          const int64_t tok = (t * gh + gy) * gw + gx;
          index.push_back(tok * tok_dim + (dy * p + dx) * c + ch);
        }
      }
    }
  }
  return gather_flat(tokens, std::move(index), {T, h, w, c});
}

// ---------------------------------------------------------------------------
// init

namespace {

void add_param(ParamMap& params, Rng& rng, const std::string& name, Shape shape, bool zero_init) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)), 0.0);
  if (!zero_init) fill_truncated_normal(rng, v, 0.0, 0.02);
  params.emplace(name, Tensor(std::move(shape), std::move(v)));
}

void add_block_params(ParamMap& params, Rng& rng, const std::string& pre, int64_t d) {
  add_param(params, rng, pre + "mod.w", {d, 6 * d}, true);
  add_param(params, rng, pre + "mod.b", {6 * d}, true);
  add_param(params, rng, pre + "attn.wq", {d, d}, false);
  add_param(params, rng, pre + "attn.bq", {d}, true);
  add_param(params, rng, pre + "attn.wk", {d, d}, false);
  add_param(params, rng, pre + "attn.bk", {d}, true);
  add_param(params, rng, pre + "attn.wv", {d, d}, false);
  add_param(params, rng, pre + "attn.bv", {d}, true);
  add_param(params, rng, pre + "attn.wo", {d, d}, false);
  add_param(params, rng, pre + "attn.bo", {d}, true);
  add_param(params, rng, pre + "mlp.w1", {d, kMlpRatio * d}, false);
  add_param(params, rng, pre + "mlp.b1", {kMlpRatio * d}, true);
  add_param(params, rng, pre + "mlp.w2", {kMlpRatio * d, d}, false);
  add_param(params, rng, pre + "mlp.b2", {d}, true);
}

}  // namespace

VDiTModel init_params(const VDiTConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int64_t d = cfg.hidden_dim;
  Rng rng = make_rng(seed, 0x696e6974);  // "init"
  VDiTModel model;
  model.config = cfg;
  ParamMap& p = model.params;

  // Construction order is fixed; the map then gives a deterministic
  // iteration order for binding, optimization, and checkpointing.
  add_param(p, rng, "patch_embed.w", {cfg.token_dim(), d}, false);
  add_param(p, rng, "patch_embed.b", {d}, true);
  add_param(p, rng, "pos_spatial", {cfg.tokens_per_frame(), d}, false);
  add_param(p, rng, "pos_temporal", {cfg.frames, d}, false);
  add_param(p, rng, "time_mlp.w1", {cfg.time_embed_dim, d}, false);
  add_param(p, rng, "time_mlp.b1", {d}, true);
  add_param(p, rng, "time_mlp.w2", {d, d}, false);
  add_param(p, rng, "time_mlp.b2", {d}, true);
  if (cfg.num_classes > 0) {
    add_param(p, rng, "class_embed", {cfg.num_classes + 1, d}, false);  // last row = null class
  }
  for (int64_t i = 0; i < cfg.depth; ++i) {
    add_block_params(p, rng, block_prefix(i, Placement::Spatial), d);
    add_block_params(p, rng, block_prefix(i, Placement::Temporal), d);
  }
  add_param(p, rng, "final.mod.w", {d, 2 * d}, true);
  add_param(p, rng, "final.mod.b", {2 * d}, true);
  add_param(p, rng, "final.w", {d, cfg.token_dim()}, true);
  add_param(p, rng, "final.b", {cfg.token_dim()}, true);
  return model;
}

int64_t param_count(const VDiTConfig& cfg) {
  VDiTModel m = init_params(cfg, 0);
  int64_t n = 0;
  for (const auto& [name, t] : m.params) n += t.size();
  return n;
}

// ---------------------------------------------------------------------------
// forward

namespace {

const Tensor& param(const BoundModel& m, const std::string& name) {
  auto it = m.params.find(name);
  if (it == m.params.end()) throw std::logic_error("forward: missing parameter " + name);
  return it->second;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowwise(matmul(x, w), b);
}

// Attention over row groups with the heads split from the hidden dim; the
// result rows are restored to the caller's original ordering.
Tensor grouped_attention(const BoundModel& m, const std::string& pre, const Tensor& x,
                         const std::vector<std::vector<int64_t>>& groups, int64_t heads) {
  const int64_t d = x.dim(1);
  const int64_t hd = d / heads;
  const Tensor q = linear(x, param(m, pre + "attn.wq"), param(m, pre + "attn.bq"));
  const Tensor k = linear(x, param(m, pre + "attn.wk"), param(m, pre + "attn.bk"));
  const Tensor v = linear(x, param(m, pre + "attn.wv"), param(m, pre + "attn.bv"));

  std::vector<Tensor> group_outs;
  std::vector<int64_t> order;
  group_outs.reserve(groups.size());
  for (const auto& rows : groups) {
    const Tensor qg = gather_rows(q, rows);
    const Tensor kg = gather_rows(k, rows);
    const Tensor vg = gather_rows(v, rows);
    std::vector<Tensor> heads_out;
    heads_out.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
      heads_out.push_back(softmax_attention(slice_cols(qg, h * hd, hd), slice_cols(kg, h * hd, hd),
                                            slice_cols(vg, h * hd, hd)));
    }
    group_outs.push_back(concat_cols(heads_out));
    order.insert(order.end(), rows.begin(), rows.end());
  }
  Tensor stacked = concat_rows(group_outs);

  // invert the row permutation introduced by group stacking
  std::vector<int64_t> inverse(order.size());
  for (size_t i = 0; i < order.size(); ++i) inverse[static_cast<size_t>(order[i])] = static_cast<int64_t>(i);
  Tensor restored = gather_rows(stacked, inverse);
  return linear(restored, param(m, pre + "attn.wo"), param(m, pre + "attn.bo"));
}

// Pre-norm AdaLN block: gated attention sublayer + gated MLP sublayer.
Tensor dit_block(const BoundModel& m, const std::string& pre, Tensor x, const Tensor& cond,
                 const std::vector<std::vector<int64_t>>& groups, int64_t heads) {
  const int64_t d = x.dim(1);
  const Tensor unit = Tensor::ones({d});
  const Tensor zero = Tensor::zeros({d});

  const Tensor mod = linear(cond, param(m, pre + "mod.w"), param(m, pre + "mod.b"));  // [1, 6d]
  auto mod_vec = [&](int64_t i) { return reshape(slice_cols(mod, i * d, d), {d}); };
  const Tensor shift_attn = mod_vec(0), scale_attn = mod_vec(1), gate_attn = mod_vec(2);
  const Tensor shift_mlp = mod_vec(3), scale_mlp = mod_vec(4), gate_mlp = mod_vec(5);

  Tensor h = layernorm(x, unit, zero, kLnEps);
  h = add_rowwise(mul_rowwise(h, add(scale_attn, 1.0)), shift_attn);
  h = grouped_attention(m, pre, h, groups, heads);
  x = add(x, mul_rowwise(h, gate_attn));

  Tensor h2 = layernorm(x, unit, zero, kLnEps);
  h2 = add_rowwise(mul_rowwise(h2, add(scale_mlp, 1.0)), shift_mlp);
  h2 = linear(gelu(linear(h2, param(m, pre + "mlp.w1"), param(m, pre + "mlp.b1"))),
              param(m, pre + "mlp.w2"), param(m, pre + "mlp.b2"));
  return add(x, mul_rowwise(h2, gate_mlp));
}

}  // namespace

Tensor time_embedding(double time_value, int64_t dim) {
  const int64_t half = dim / 2;
  std::vector<double> v(static_cast<size_t>(dim));
  for (int64_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    v[static_cast<size_t>(i)] = std::cos(time_value * freq);
    v[static_cast<size_t>(half + i)] = std::sin(time_value * freq);
  }
  return Tensor({1, dim}, std::move(v));
}

BoundModel bind(const VDiTModel& model, Tape* tape) {
  BoundModel b;
  b.config = &model.config;
  b.tape = tape;
  for (const auto& [name, t] : model.params) {
    b.params.emplace(name, tape != nullptr ? tape->leaf(t) : t);
  }
  return b;
}

const Tensor& ForwardResult::hidden(int64_t depth, Placement place) const {
  const auto& vec = place == Placement::Spatial ? post_spatial : post_temporal;
  if (depth < 0 || depth >= static_cast<int64_t>(vec.size())) {
    throw std::invalid_argument("ForwardResult::hidden: depth out of range");
  }
  return vec[static_cast<size_t>(depth)];
}

ForwardResult forward(const BoundModel& m, const Tensor& noisy_latent, double time_value,
                      std::optional<int> class_id) {
  const VDiTConfig& cfg = *m.config;
  if (noisy_latent.rank() != 4 || noisy_latent.dim(0) != cfg.frames ||
      noisy_latent.dim(1) != cfg.latent_h || noisy_latent.dim(2) != cfg.latent_w ||
      noisy_latent.dim(3) != cfg.latent_c) {
    throw std::invalid_argument("forward: latent shape does not match config");
  }
  if (class_id) {
    if (cfg.num_classes == 0) throw std::invalid_argument("forward: model is unconditional");
    if (*class_id < 0 || *class_id >= cfg.num_classes) {
      throw std::invalid_argument("forward: class_id out of range");
    }
  }

  const int64_t T = cfg.frames;
  const int64_t ntok = cfg.tokens_per_frame();
  const int64_t n = T * ntok;
  const int64_t d = cfg.hidden_dim;

  // conditioning vector: time MLP (+ class row when conditional)
  Tensor cond = linear(gelu(linear(time_embedding(time_value, cfg.time_embed_dim),
                                   param(m, "time_mlp.w1"), param(m, "time_mlp.b1"))),
                       param(m, "time_mlp.w2"), param(m, "time_mlp.b2"));
  if (cfg.num_classes > 0) {
    const int64_t row = class_id ? static_cast<int64_t>(*class_id) : cfg.num_classes;  // null row
    cond = add(cond, gather_rows(param(m, "class_embed"), {row}));
  }

  // patch tokens + spatial positional embedding
  Tensor x = reshape(patchify(noisy_latent, cfg.patch_size), {n, cfg.token_dim()});
  x = linear(x, param(m, "patch_embed.w"), param(m, "patch_embed.b"));
  std::vector<int64_t> spatial_tile(static_cast<size_t>(n));
  std::vector<int64_t> temporal_tile(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    spatial_tile[static_cast<size_t>(r)] = r % ntok;
    temporal_tile[static_cast<size_t>(r)] = r / ntok;
  }
  x = add(x, gather_rows(param(m, "pos_spatial"), spatial_tile));

  std::vector<std::vector<int64_t>> frame_groups(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t k = 0; k < ntok; ++k) frame_groups[static_cast<size_t>(t)].push_back(t * ntok + k);
  }
  std::vector<std::vector<int64_t>> position_groups(static_cast<size_t>(ntok));
  for (int64_t k = 0; k < ntok; ++k) {
    for (int64_t t = 0; t < T; ++t) position_groups[static_cast<size_t>(k)].push_back(t * ntok + k);
  }

  ForwardResult res;
  for (int64_t i = 0; i < cfg.depth; ++i) {
    x = dit_block(m, block_prefix(i, Placement::Spatial), x, cond, frame_groups, cfg.heads);
    res.post_spatial.push_back(x);
    if (i == 0) {
      // temporal positional embedding enters after the first spatial block
      x = add(x, gather_rows(param(m, "pos_temporal"), temporal_tile));
    }
    x = dit_block(m, block_prefix(i, Placement::Temporal), x, cond, position_groups, cfg.heads);
    res.post_temporal.push_back(x);
  }

  // final norm, AdaLN shift/scale, zero-initialized projection
  const Tensor mod = linear(cond, param(m, "final.mod.w"), param(m, "final.mod.b"));
  const Tensor shift = reshape(slice_cols(mod, 0, d), {d});
  const Tensor scale = reshape(slice_cols(mod, d, d), {d});
  Tensor out = layernorm(x, Tensor::ones({d}), Tensor::zeros({d}), kLnEps);
  out = add_rowwise(mul_rowwise(out, add(scale, 1.0)), shift);
  out = linear(out, param(m, "final.w"), param(m, "final.b"));
  res.prediction = unpatchify(reshape(out, {T, ntok, cfg.token_dim()}), cfg.patch_size, cfg.latent_h,
                              cfg.latent_w, cfg.latent_c);
  return res;
}

// ---------------------------------------------------------------------------
// checkpointing

void save_checkpoint(const std::filesystem::path& dir, const VDiTModel& model,
                     const ParamMap& extras) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json header;
  header["config"] = {
      {"depth", model.config.depth},
      {"hidden_dim", model.config.hidden_dim},
      {"heads", model.config.heads},
      {"patch_size", model.config.patch_size},
      {"frames", model.config.frames},
      {"latent_h", model.config.latent_h},
      {"latent_w", model.config.latent_w},
      {"latent_c", model.config.latent_c},
      {"num_classes", model.config.num_classes},
      {"time_embed_dim", model.config.time_embed_dim},
  };

  auto dump_group = [&](const ParamMap& group, const char* key, const char* stem) {
    header[key] = nlohmann::ordered_json::array();
    int64_t i = 0;
    for (const auto& [name, t] : group) {
      char file[32];
      std::snprintf(file, sizeof(file), "%s%04lld.a4gt", stem, static_cast<long long>(i++));
      write_tensor(dir / file, t);
      header[key].push_back({{"name", name}, {"file", file}});
    }
  };
  dump_group(model.params, "params", "p");
  dump_group(extras, "extras", "x");

  std::ofstream out(dir / "header.json", std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open header in " + dir.string());
  out << header.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw IoError("load_checkpoint: cannot open header in " + dir.string());
  nlohmann::json header;
  try {
    in >> header;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("load_checkpoint: invalid header JSON: ") + e.what());
  }

  Checkpoint ck;
  const auto& c = header.at("config");
  ck.model.config.depth = c.at("depth").get<int64_t>();
  ck.model.config.hidden_dim = c.at("hidden_dim").get<int64_t>();
  ck.model.config.heads = c.at("heads").get<int64_t>();
  ck.model.config.patch_size = c.at("patch_size").get<int64_t>();
  ck.model.config.frames = c.at("frames").get<int64_t>();
  ck.model.config.latent_h = c.at("latent_h").get<int64_t>();
  ck.model.config.latent_w = c.at("latent_w").get<int64_t>();
  ck.model.config.latent_c = c.at("latent_c").get<int64_t>();
  ck.model.config.num_classes = c.at("num_classes").get<int64_t>();
  ck.model.config.time_embed_dim = c.at("time_embed_dim").get<int64_t>();
  ck.model.config.validate();

  auto load_group = [&](const char* key, ParamMap& into) {
    for (const auto& e : header.at(key)) {
      into.emplace(e.at("name").get<std::string>(), read_tensor(dir / e.at("file").get<std::string>()));
    }
  };
  load_group("params", ck.model.params);
  load_group("extras", ck.extras);
  return ck;
}

}  // namespace a4g
