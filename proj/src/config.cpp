#include "a4g/config.hpp"

#include <fstream>

namespace a4g {

using nlohmann::json;
using nlohmann::ordered_json;

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

namespace {

// json::value with ConfigError wrapping for type mismatches
template <typename T>
T field(const json& j, const char* key, T fallback) {
  try {
    return j.value(key, fallback);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

std::string str_field(const json& j, const char* key, const std::string& fallback) {
  return field<std::string>(j, key, fallback);
}

}  // namespace

SyntheticDatasetConfig parse_dataset_config(const json& j) {
  SyntheticDatasetConfig cfg;
  cfg.seed = field<uint64_t>(j, "seed", cfg.seed);
  cfg.n_clips = field<int64_t>(j, "n_clips", cfg.n_clips);
  cfg.frames = field<int64_t>(j, "frames", cfg.frames);
  cfg.height = field<int64_t>(j, "height", cfg.height);
  cfg.width = field<int64_t>(j, "width", cfg.width);
  cfg.channels = field<int64_t>(j, "channels", cfg.channels);
  try {
    cfg.motion = motion_kind_from_string(str_field(j, "motion", to_string(cfg.motion)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.num_classes = field<int64_t>(j, "num_classes", cfg.num_classes);
  cfg.blob_sigma = field<double>(j, "blob_sigma", cfg.blob_sigma);
  cfg.blob_amplitude = field<double>(j, "blob_amplitude", cfg.blob_amplitude);
  cfg.speed = field<int64_t>(j, "speed", cfg.speed);
  return cfg;
}

ordered_json dataset_config_to_json(const SyntheticDatasetConfig& cfg) {
  return ordered_json{{"seed", cfg.seed},
                      {"n_clips", cfg.n_clips},
                      {"frames", cfg.frames},
                      {"height", cfg.height},
                      {"width", cfg.width},
                      {"channels", cfg.channels},
                      {"motion", to_string(cfg.motion)},
                      {"num_classes", cfg.num_classes},
                      {"blob_sigma", cfg.blob_sigma},
                      {"blob_amplitude", cfg.blob_amplitude},
                      {"speed", cfg.speed}};
}

VDiTConfig parse_model_config(const json& j) {
  VDiTConfig cfg;
  cfg.depth = field<int64_t>(j, "depth", cfg.depth);
  cfg.hidden_dim = field<int64_t>(j, "hidden_dim", cfg.hidden_dim);
  cfg.heads = field<int64_t>(j, "heads", cfg.heads);
  cfg.patch_size = field<int64_t>(j, "patch_size", cfg.patch_size);
  cfg.frames = field<int64_t>(j, "frames", cfg.frames);
  cfg.latent_h = field<int64_t>(j, "latent_h", cfg.latent_h);
  cfg.latent_w = field<int64_t>(j, "latent_w", cfg.latent_w);
  cfg.latent_c = field<int64_t>(j, "latent_c", cfg.latent_c);
  cfg.num_classes = field<int64_t>(j, "num_classes", cfg.num_classes);
  cfg.time_embed_dim = field<int64_t>(j, "time_embed_dim", cfg.time_embed_dim);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ordered_json model_config_to_json(const VDiTConfig& cfg) {
  return ordered_json{{"depth", cfg.depth},
                      {"hidden_dim", cfg.hidden_dim},
                      {"heads", cfg.heads},
                      {"patch_size", cfg.patch_size},
                      {"frames", cfg.frames},
                      {"latent_h", cfg.latent_h},
                      {"latent_w", cfg.latent_w},
                      {"latent_c", cfg.latent_c},
                      {"num_classes", cfg.num_classes},
                      {"time_embed_dim", cfg.time_embed_dim}};
}

TrainConfig parse_train_config(const json& j) {
  TrainConfig cfg;
  try {
    cfg.objective = objective_from_string(str_field(j, "objective", to_string(cfg.objective)));
    cfg.align_placement =
        placement_from_string(str_field(j, "align_placement", to_string(cfg.align_placement)));
    cfg.align_distance =
        align_distance_from_string(str_field(j, "align_distance", to_string(cfg.align_distance)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.gamma = field<double>(j, "gamma", cfg.gamma);
  cfg.align_depth = field<int64_t>(j, "align_depth", cfg.align_depth);
  cfg.batch_size = field<int64_t>(j, "batch_size", cfg.batch_size);
  cfg.steps = field<int64_t>(j, "steps", cfg.steps);
  cfg.learning_rate = field<double>(j, "learning_rate", cfg.learning_rate);
  cfg.seed = field<uint64_t>(j, "seed", cfg.seed);
  cfg.t_steps = field<int64_t>(j, "t_steps", cfg.t_steps);
  cfg.beta_start = field<double>(j, "beta_start", cfg.beta_start);
  cfg.beta_end = field<double>(j, "beta_end", cfg.beta_end);
  cfg.checkpoint_every = field<int64_t>(j, "checkpoint_every", cfg.checkpoint_every);

  if (j.contains("encoders")) {
    if (!j["encoders"].is_array()) throw ConfigError("train.encoders must be an array");
    cfg.encoders.clear();
    for (const auto& e : j["encoders"]) {
      OracleEncoder enc;
      try {
        enc.kind = encoder_kind_from_string(str_field(e, "kind", "projection"));
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
      }
      enc.seed = field<uint64_t>(e, "seed", 0);
      enc.out_channels = field<int64_t>(e, "out_channels", 8);
      enc.stride = field<int64_t>(e, "stride", 2);
      cfg.encoders.push_back(enc);
    }
  }
  return cfg;
}

ordered_json train_config_to_json(const TrainConfig& cfg) {
  ordered_json encoders = ordered_json::array();
  for (const auto& e : cfg.encoders) {
    encoders.push_back(ordered_json{{"kind", to_string(e.kind)},
                                    {"seed", e.seed},
                                    {"out_channels", e.out_channels},
                                    {"stride", e.stride}});
  }
  return ordered_json{{"objective", to_string(cfg.objective)},
                      {"gamma", cfg.gamma},
                      {"align_depth", cfg.align_depth},
                      {"align_placement", to_string(cfg.align_placement)},
                      {"batch_size", cfg.batch_size},
                      {"steps", cfg.steps},
                      {"learning_rate", cfg.learning_rate},
                      {"seed", cfg.seed},
                      {"t_steps", cfg.t_steps},
                      {"beta_start", cfg.beta_start},
                      {"beta_end", cfg.beta_end},
                      {"align_distance", to_string(cfg.align_distance)},
                      {"checkpoint_every", cfg.checkpoint_every},
                      {"encoders", encoders}};
}

TrainBundle parse_train_bundle(const json& j, const std::filesystem::path& base_dir) {
  if (!j.contains("model")) throw ConfigError("train config: missing 'model' object");
  if (!j.contains("train")) throw ConfigError("train config: missing 'train' object");
  if (!j.contains("dataset") || !j["dataset"].contains("path")) {
    throw ConfigError("train config: missing 'dataset.path'");
  }
  TrainBundle b;
  b.model = parse_model_config(j["model"]);
  b.train = parse_train_config(j["train"]);
  std::filesystem::path p = j["dataset"]["path"].get<std::string>();
  b.dataset_dir = p.is_absolute() ? p : base_dir / p;
  try {
    b.train.validate(b.model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return b;
}

GenerateConfig parse_sample_config(const json& j) {
  GenerateConfig cfg;
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    try {
      cfg.sampler.kind = sampler_kind_from_string(str_field(s, "kind", to_string(cfg.sampler.kind)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    cfg.sampler.steps = field<int64_t>(s, "steps", cfg.sampler.steps);
    cfg.sampler.seed = field<uint64_t>(s, "seed", cfg.sampler.seed);
    cfg.sampler.eta = field<double>(s, "eta", cfg.sampler.eta);
  }
  if (j.contains("objective")) {
    try {
      cfg.objective = objective_from_string(j["objective"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else {
    cfg.objective = cfg.sampler.kind == SamplerConfig::Kind::Euler ? Objective::Flow
                                                                   : Objective::Diffusion;
  }
  cfg.n = field<int64_t>(j, "n", cfg.n);
  cfg.t_steps = field<int64_t>(j, "t_steps", cfg.t_steps);
  cfg.beta_start = field<double>(j, "beta_start", cfg.beta_start);
  cfg.beta_end = field<double>(j, "beta_end", cfg.beta_end);
  if (j.contains("class_ids")) {
    if (!j["class_ids"].is_array()) throw ConfigError("sample config: class_ids must be an array");
    for (const auto& c : j["class_ids"]) cfg.class_ids.push_back(c.get<int>());
  }
  try {
    cfg.sampler.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

EvalConfig parse_eval_config(const json& j) {
  EvalConfig cfg;
  cfg.n = field<int64_t>(j, "n", cfg.n);
  cfg.clip_len = field<int64_t>(j, "clip_len", cfg.clip_len);
  cfg.seed = field<uint64_t>(j, "seed", cfg.seed);
  cfg.class_stratified = field<bool>(j, "class_stratified", cfg.class_stratified);
  return cfg;
}

std::vector<SyntheticClip> load_dataset(const std::filesystem::path& dir) {
  const Manifest m = read_manifest(dir / "manifest.json");
  std::vector<SyntheticClip> clips;
  clips.reserve(m.items.size());
  for (const auto& item : m.items) {
    clips.push_back(SyntheticClip{read_tensor(dir / item.path), item.class_id});
  }
  return clips;
}

}  // namespace a4g
