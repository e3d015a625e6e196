#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bacon/config.hpp"
#include "bacon/distill.hpp"
#include "bacon/evalkit.hpp"

namespace bacon::experiment {

// Views are rounded to 8-bit levels so in-memory frames equal what a PNG
// round trip yields.
std::vector<scenegen::MultiBaselineFrame> generate_frames(const config::DatasetConfig& d,
                                                          const stereonet::ArchConfig& arch);

// Writes a dataset; refuses a non-empty directory unless force is set.
void write_generated(const std::vector<scenegen::MultiBaselineFrame>& frames, const config::DatasetConfig& d,
                     const std::string& config_hash, bool force);

// Frame count and a histogram of adjacent-pair GT disparities.
std::string dataset_summary(const std::vector<scenegen::MultiBaselineFrame>& frames);

struct LossRecord {
  long step = 0;
  double contrastive = 0, photometric = 0, smoothness = 0, total = 0, momentum = 0, lr = 0;
};

std::string loss_csv_header();
std::string loss_csv_line(const LossRecord& r);
std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

// Raises the allocator's mmap threshold (glibc only); run_training calls it.
void tune_allocator();

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // unset: nothing written
  bool evaluate = true;
  int monitor_frames = 2;  // held-out frames for the collapse monitor
  bool verbose = false;
};

struct TrainOutcome {
  distill::TrainState state;
  std::vector<LossRecord> trace;
  std::optional<evalkit::Report> report;
  // (step, mean teacher disparity on held-out frames), recorded after 20% of training.
  std::vector<std::pair<long, double>> monitor;
  bool collapse_warning = false;
  std::size_t gt_student_occluded = 0;
  std::size_t supervised_occluded = 0;
  std::string config_hash;
};

TrainOutcome run_training(const config::RunConfig& cfg, std::span<const scenegen::MultiBaselineFrame> train,
                          std::span<const scenegen::MultiBaselineFrame> eval, const TrainOptions& opt = {});

double mean_teacher_disparity(const stereonet::ParamSet& teacher,
                              std::span<const scenegen::MultiBaselineFrame> frames, int max_frames);

struct AblationEntry {
  std::string row;
  evalkit::Report report;
};

// Combined comparison of ablation rows, in the given order.
nlohmann::json comparison_json(const std::vector<AblationEntry>& entries);
std::string comparison_csv(const std::vector<AblationEntry>& entries);

}  // namespace bacon::experiment
