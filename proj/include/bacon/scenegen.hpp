#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bacon/tensor.hpp"

namespace bacon::scenegen {

enum class TextureFamily { noise, checker, gradient_mix };

std::string to_string(TextureFamily f);
TextureFamily texture_family_from_string(const std::string& s);

// Fronto-parallel textured rectangle. The rectangle is given in image-plane
// coordinates at unit depth, i.e. X/Z and Y/Z in the world frame whose origin
// is the rig centre.
struct Layer {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double depth = 1.0;
  std::uint64_t texture_seed = 0;
};

struct SceneSpec {
  double background_depth = 10.0;
  std::vector<Layer> layers;
  double focal = 480.0;
  int width = 256;
  int height = 128;
  TextureFamily texture_family = TextureFamily::noise;

  void validate() const;
};

struct RigConfig {
  int n_views = 5;
  double baseline_step = 0.5;
  // Network disparity range; 0 disables the overflow check.
  int d_max = 0;
};

// Continuous procedural texture on a plane, evaluated in plane-pixel units
// (s = f·X/Z, t = f·Y/Z). Identical (s, t) give bit-identical colors.
class PlaneTexture {
 public:
  PlaneTexture(TextureFamily family, std::uint64_t seed);
  std::array<double, 3> operator()(double s, double t) const;

 private:
  double noise(double s, double t, std::uint64_t salt) const;

  TextureFamily family_;
  std::uint64_t seed_;
  std::array<double, 3> base_{};
  std::array<double, 3> alt_{};
  double checker_cell_ = 6.0;
  double gradient_s_ = 0.0;
  double gradient_t_ = 0.0;
};

struct MultiBaselineFrame {
  std::string id;
  std::uint64_t seed = 0;
  SceneSpec spec;
  double focal = 0;
  std::vector<double> camera_offsets;  // meters, strictly increasing, uniform step
  std::vector<Image> views;            // RGB in [0,1]
  std::vector<Map> depth;              // per view, meters
  // Ordered-pair tables indexed ref * K + tgt; diagonal entries stay empty.
  std::vector<Map> disparity;
  std::vector<Mask> occlusion;

  int n_views() const { return static_cast<int>(views.size()); }
  int height() const { return views.empty() ? 0 : views.front().height(); }
  int width() const { return views.empty() ? 0 : views.front().width(); }
  double baseline(int i, int j) const;
  bool target_on_left(int ref, int tgt) const { return camera_offsets.at(tgt) < camera_offsets.at(ref); }

  const Map& gt_disparity(int ref, int tgt) const;
  const Mask& gt_occlusion(int ref, int tgt) const;
  std::size_t pair_index(int ref, int tgt) const;
};

// d = B·f / z elementwise; infinite depth maps to zero disparity.
DisparityMap gt_disparity_from_depth(const Map& depth, double baseline, double focal);

// z-buffer visibility of reference pixels in the target view, using the
// target's rendered depth as the buffer. True = occluded or out of view.
Mask gt_occlusion_mask(const MultiBaselineFrame& frame, int ref_idx, int tgt_idx);

MultiBaselineFrame render_frame(const SceneSpec& spec, const RigConfig& rig, std::uint64_t rng_seed);

// Largest disparity any pair of the rig would see for this scene.
double max_rig_disparity(const SceneSpec& spec, const RigConfig& rig);

std::vector<double> rig_offsets(const RigConfig& rig);

// Depths in [z_min, z_max] whose disparity is an exactly representable
// integer for every baseline multiple of the rig. Sorted far to near.
std::vector<double> exact_depth_candidates(double focal, const RigConfig& rig, double z_min, double z_max);

struct SceneRanges {
  double depth_min = 16.0;
  double depth_max = 40.0;
  int min_layers = 1;
  int max_layers = 3;
  double min_layer_width = 0.15;  // fraction of image width
  double max_layer_width = 0.40;
  double min_layer_height = 0.25;  // fraction of image height
  double max_layer_height = 0.70;
};

struct ImageGeometry {
  double focal = 480.0;
  int width = 256;
  int height = 128;
};

// Random layered scene from a seed. Deterministic.
SceneSpec sample_scene(const SceneRanges& ranges, const ImageGeometry& geom, const RigConfig& rig,
                       std::uint64_t seed);

}  // namespace bacon::scenegen
