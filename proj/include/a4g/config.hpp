#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "a4g/genmetrics.hpp"
#include "a4g/io.hpp"
#include "a4g/sampling.hpp"
#include "a4g/training.hpp"
#include "a4g/vdit.hpp"

namespace a4g {

/// Invalid or missing configuration (exit code 2 at the CLI).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

nlohmann::json load_json_file(const std::filesystem::path& path);

SyntheticDatasetConfig parse_dataset_config(const nlohmann::json& j);
nlohmann::ordered_json dataset_config_to_json(const SyntheticDatasetConfig& cfg);

VDiTConfig parse_model_config(const nlohmann::json& j);
nlohmann::ordered_json model_config_to_json(const VDiTConfig& cfg);

TrainConfig parse_train_config(const nlohmann::json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);

struct TrainBundle {
  VDiTConfig model;
  TrainConfig train;
  std::filesystem::path dataset_dir;
};

/// Full training config file: {"model": ..., "train": ..., "dataset": {"path": ...}}.
/// Relative dataset paths resolve against base_dir.
TrainBundle parse_train_bundle(const nlohmann::json& j, const std::filesystem::path& base_dir);

GenerateConfig parse_sample_config(const nlohmann::json& j);
EvalConfig parse_eval_config(const nlohmann::json& j);

/// Clips listed by a dataset manifest, loaded back into memory.
std::vector<SyntheticClip> load_dataset(const std::filesystem::path& dir);

}  // namespace a4g
