#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bacon/losses.hpp"
#include "bacon/rng.hpp"
#include "bacon/scenegen.hpp"
#include "bacon/stereonet.hpp"

namespace bacon::distill {

using stereonet::ParamSet;

struct Triplet {
  int ref_idx = 0;
  int student_tgt_idx = 1;
  int teacher_tgt_idx = 2;
  double B_s = 0;
  double B_t = 0;
  double r = 0;  // B_s / B_t
  bool flip_student = false;
  bool flip_teacher = false;
};

// Builds a triplet from explicit indices and camera offsets.
Triplet make_triplet(std::span<const double> camera_offsets, int ref, int student_tgt, int teacher_tgt);
Triplet sample_triplet(const scenegen::MultiBaselineFrame& frame, Rng& rng);
Triplet sample_triplet(std::span<const double> camera_offsets, Rng& rng);

struct AugmentConfig {
  double probability = 0.8;  // chance that color jitter is applied to a pair
  double brightness = 0.2;   // multiplicative factor drawn from [1-b, 1+b]
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.05;  // fraction of a full turn
  int max_erase = 2;  // per image, count drawn from {0..max_erase}
  double erase_min_frac = 0.05;
  double erase_max_frac = 0.25;

  void validate() const;
};

nlohmann::json to_json(const AugmentConfig& a);
AugmentConfig augment_from_json(const nlohmann::json& j);

struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
};

// Fills the rectangle with uniform noise and tags the image as augmented.
void erase_rect(Image& img, const Rect& rect, Rng& rng);

// Shared jitter on both images, independent erasing per image, clipped to [0,1].
std::pair<Image, Image> augment_student(const Image& ref, const Image& tgt, Rng& rng, const AugmentConfig& cfg = {});

struct MomentumSchedule {
  double m_base = 0.996;
  long total_steps = 5000;
};

double momentum_at(const MomentumSchedule& s, long step);

// θ_t ← m·θ_t + (1−m)·θ_s, returned as a new ParamSet.
ParamSet ema_update(const ParamSet& teacher, const ParamSet& student, double m);

struct OneCycle {
  double lr_max = 2e-4;
  long total_steps = 5000;
  double pct_start = 0.01;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
};

// Linear warm-up to lr_max, then linear decay; clamped at the last step.
double learning_rate(const OneCycle& s, long step);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  long t = 0;
};

AdamState adam_init(const ParamSet& params);
// Returns the updated parameters; the state is advanced in place.
ParamSet adam_step(const ParamSet& params, const ParamSet& grads, AdamState& state, double lr, const AdamConfig& cfg);

struct TrainConfig {
  long steps = 5000;
  int batch = 4;
  int crop_height = 128;
  int crop_width = 256;
  std::uint64_t seed = 0;
  OneCycle lr;
  AdamConfig adam;
  double m_base = 0.996;
  bool ema = true;  // false: teacher stays at its initial copy
  losses::LossConfig loss;
  losses::LossPolicy policy;
  AugmentConfig augment;
  bool augment_enabled = true;

  void validate() const;
};

struct TrainState {
  ParamSet student;
  ParamSet teacher;
  AdamState adam;
  long step = 0;
  int consecutive_nonfinite = 0;
};

// Student from init_params; the teacher starts as an exact copy.
TrainState init_state(const stereonet::ArchConfig& arch, std::uint64_t seed);

struct SampleDiagnostics {
  Triplet triplet;
  std::size_t gt_student_occluded = 0;  // GT-occluded pixels of the student pair
  std::size_t supervised_occluded = 0;  // of those, pixels with attention > 0
  double mean_teacher_disparity = 0;
};

struct StepResult {
  TrainState state;
  losses::LossReport report;  // batch mean; maps are from the last sample
  ParamSet teacher_grad;      // always zero: the teacher is outside the graph
  std::vector<SampleDiagnostics> samples;
  double momentum = 0;
  double lr = 0;
  bool applied = true;  // false when the step was skipped for a non-finite loss
};

// Teacher path: refuses images tagged as augmented.
DisparityMap teacher_predict(const ParamSet& teacher, const Image& ref, const Image& tgt, bool tgt_on_left);

StepResult train_step(const TrainState& state, std::span<const scenegen::MultiBaselineFrame> frames,
                      const TrainConfig& cfg);

struct Checkpoint {
  ParamSet student;
  ParamSet teacher;
  AdamState adam;
  long step = 0;
  nlohmann::json config;
  std::string id;
};

inline constexpr const char* kCheckpointSchema = "bacon-checkpoint/1";

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bacon::distill
