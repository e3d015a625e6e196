#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bacon/distill.hpp"
#include "bacon/scenegen.hpp"
#include "bacon/stereonet.hpp"

namespace bacon::config {

struct DatasetConfig {
  std::string path = "data/train";
  int n_frames = 200;
  std::uint64_t seed = 1;
  scenegen::SceneRanges ranges;
  scenegen::ImageGeometry geometry;
  int n_views = 5;
  double baseline_step = 0.5;
};

// Loss-term subset, EMA switch and mask flags.
struct Ablation {
  std::string row = "E";
  bool contrastive = true;
  bool photometric = true;
  bool smoothness = true;
  bool ema = true;
  bool threshold_mask = true;
  bool auto_mask = true;
  bool occlusion_aware = true;
};

struct RunConfig {
  DatasetConfig dataset;
  DatasetConfig eval_dataset;
  distill::TrainConfig training;  // loss policy is derived from `ablation`
  stereonet::ArchConfig arch;
  Ablation ablation;
  long checkpoint_every = 1000;
  long log_every = 1;
  std::string out_dir = "runs/default";
};

// Reference hyperparameters; desk-scale fields (steps, crop, resolution) explicit.
RunConfig default_config();

nlohmann::json to_json(const RunConfig& c);
// Missing keys take defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void validate(const RunConfig& c);

// FNV-1a 64 of the canonical JSON dump, hex.
std::string hash_json(const nlohmann::json& j);
std::string config_hash(const RunConfig& c);

// Named rows: A B C D E E* (loss terms, EMA) and T5-none T5-thr T5-auto
// T5-thr-auto T5-full (mask flags, occlusion-aware attention).
std::vector<std::string> ablation_rows();
std::vector<std::string> loss_table_rows();
std::vector<std::string> mask_table_rows();
Ablation ablation_for(const std::string& row);

losses::LossPolicy policy_for(const Ablation& a);
// Training config with the ablation applied.
distill::TrainConfig effective_training(const RunConfig& c);
scenegen::RigConfig rig_for(const DatasetConfig& d, const stereonet::ArchConfig& arch);

}  // namespace bacon::config
