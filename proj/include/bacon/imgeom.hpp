#pragma once

#include "bacon/tensor.hpp"

namespace bacon::imgeom {

struct SampleResult {
  Image values;
  Mask validity;  // false where the coordinate fell outside [0, W-1]
};

// Two-tap horizontal linear interpolation along each row. Out-of-range
// coordinates clamp to the edge pixel and are flagged invalid.
SampleResult bilinear_sample(const Image& image, const Map& x_coords);

// Derivative of the sampled values w.r.t. x, contracted with grad_values:
// returns Σ_c grad_values(c,y,x) · ∂sample(c,y,x)/∂x. Zero where clamped.
Map bilinear_sample_backward(const Image& image, const Map& x_coords, const Image& grad_values);

struct WarpResult {
  Image recon;
  Mask validity;
};

// recon(x, y) = target(x - d(x, y), y). The pair must be canonical: the target
// camera sits to the right of the reference.
WarpResult warp_target_to_ref(const Image& target, const DisparityMap& disparity);

// dL/dd given dL/drecon.
DisparityMap warp_backward(const Image& target, const DisparityMap& disparity, const Image& grad_recon);

Image flip_horizontal(const Image& img);
template <class T>
Grid<T> flip_horizontal(const Grid<T>& g) {
  Grid<T> out(g.height(), g.width());
  const int w = g.width();
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < w; ++x) out(y, x) = g(y, w - 1 - x);
  return out;
}

struct CanonicalPair {
  Image ref;
  Image tgt;
  bool flipped = false;
};

// Mirrors both images when the target lies left of the reference so the
// network always sees a right-hand target.
CanonicalPair canonicalize_pair(const Image& ref, const Image& tgt, bool tgt_on_left);

// Maps a disparity predicted on a canonical pair back to the original frame.
DisparityMap decanonicalize_disparity(const DisparityMap& disparity, bool flipped);

}  // namespace bacon::imgeom
