#pragma once

#include "bacon/tensor.hpp"

namespace bacon::losses {

struct LossConfig {
  double alpha = 0.85;  // SSIM / L1 blend
  double tau = 0.1;     // photometric occlusion threshold
  double lambda_p = 10.0;
  double lambda_s = 0.01;
  int ssim_window = 3;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;

  // Default profile: lambda_s tied to 0.001 · lambda_p.
  static LossConfig with_lambda_p(double lambda_p);
  void validate() const;
};

// Ablation switches: which terms enter the total and how the binary masks and
// attention map are built.
struct LossPolicy {
  bool use_contrastive = true;
  bool use_photometric = true;
  bool use_smoothness = true;
  bool threshold_mask = true;
  bool auto_mask = true;
  bool occlusion_aware = true;
  // false: photometric term averages over all pixels instead of M^s pixels.
  bool photometric_masked_mean = true;
};

// Values in {0, 1, 2}.
using AttentionMap = Grid<std::uint8_t>;

// Windowed SSIM with box-window statistics, replicate padding, channel-averaged.
Map ssim_map(const Image& a, const Image& b, const LossConfig& cfg);
// Gradient w.r.t. b of Σ grad_ssim ⊙ ssim_map(a, b).
Image ssim_backward(const Image& a, const Image& b, const LossConfig& cfg, const Map& grad_ssim);

// (α/2)(1 − SSIM) + (1 − α)·mean_c |ref − recon|
Map photometric_map(const Image& ref, const Image& recon, const LossConfig& cfg);
Image photometric_backward(const Image& ref, const Image& recon, const LossConfig& cfg, const Map& grad_map);

// Edge-aware smoothness: mean |∂x d|·exp(−|∂x I|) + mean |∂y d|·exp(−|∂y I|),
// forward differences, image gradients averaged over channels.
double smoothness_loss(const DisparityMap& disp, const Image& ref);
DisparityMap smoothness_backward(const DisparityMap& disp, const Image& ref);

// |d_s − r·d_t| per pixel. The teacher disparity is a constant here.
Map contrastive_map(const DisparityMap& d_student, const DisparityMap& d_teacher, double r);
DisparityMap contrastive_backward(const DisparityMap& d_student, const DisparityMap& d_teacher, double r,
                                  const Map& grad_map);

// (photo < τ) ∧ (photo < identity) ∧ warp_validity, each conjunct switchable.
Mask valid_mask(const Map& photo, const Map& identity_photo, const Mask& warp_validity, double tau,
                const LossPolicy& policy = {});

// 0 where the teacher mask is false, 1 where both are true, 2 where only the
// teacher is valid. With occlusion_aware = false the third case weighs 1.
AttentionMap attention_map(const Mask& teacher_mask, const Mask& student_mask, bool occlusion_aware = true);

// Photometric maps of one (reference, target) pair expressed in the original
// reference frame; the pair is canonicalized internally.
struct PairPhotometric {
  Map photo;     // against the warped target
  Map identity;  // against the un-warped target (auto-mask baseline)
  Mask validity;
};

PairPhotometric pair_photometric(const Image& ref, const Image& tgt, bool tgt_on_left, const DisparityMap& disparity,
                                 const LossConfig& cfg);
DisparityMap pair_photometric_backward(const Image& ref, const Image& tgt, bool tgt_on_left,
                                       const DisparityMap& disparity, const LossConfig& cfg, const Map& grad_photo);
Mask pair_valid_mask(const PairPhotometric& p, const LossConfig& cfg, const LossPolicy& policy);

struct LossMaps {
  Map photometric;
  Map contrastive;
  AttentionMap attention;
  Mask student_mask;
  Mask teacher_mask;
};

struct LossReport {
  double contrastive = 0;  // mean over all pixels of A ⊙ L_c
  double photometric = 0;  // masked mean of the student photometric map
  double smoothness = 0;
  double total = 0;
  LossMaps maps;
};

struct LossResult {
  LossReport report;
  DisparityMap grad_student;  // d total / d d_student, reference frame
};

// total = mean(A ⊙ L_c) + λ_p · masked-mean(L_p) + λ_s · L_s.
// Every disparity and image is in the original reference frame; the student
// target side is handled by canonicalization inside.
LossResult total_loss(const DisparityMap& d_student, const DisparityMap& d_teacher, double r, const Image& ref,
                      const Image& tgt_student, bool student_target_on_left, const Mask& teacher_mask,
                      const LossConfig& cfg, const LossPolicy& policy = {});

}  // namespace bacon::losses
