#include "bacon/imgeom.hpp"

#include <cmath>

namespace bacon::imgeom {

namespace {

struct Tap {
  int x0;
  double a;  // weight of x0 + 1
  bool valid;
};

Tap tap_for(double x, int w) {
  if (std::isnan(x)) throw InvalidArgument("NaN sample coordinate");
  bool valid = true;
  if (x < 0.0) {
    x = 0.0;
    valid = false;
  } else if (x > w - 1) {
    x = w - 1;
    valid = false;
  }
  if (w == 1) return {0, 0.0, valid};
  int x0 = static_cast<int>(std::floor(x));
  if (x0 >= w - 1) x0 = w - 2;
  return {x0, x - x0, valid};
}

}  // namespace

SampleResult bilinear_sample(const Image& image, const Map& x_coords) {
  require_same_shape(image, x_coords, "bilinear_sample");
  const int h = image.height();
  const int w = image.width();
  SampleResult out{Image(image.channels(), h, w), Mask(h, w, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Tap t = tap_for(x_coords(y, x), w);
      out.validity(y, x) = t.valid ? 1 : 0;
      const int x1 = w == 1 ? 0 : t.x0 + 1;
      for (int c = 0; c < image.channels(); ++c) {
        const double v0 = image(c, y, t.x0);
        const double v1 = image(c, y, x1);
        out.values(c, y, x) = t.a == 0.0 ? v0 : v0 + t.a * (v1 - v0);
      }
    }
  }
  return out;
}

Map bilinear_sample_backward(const Image& image, const Map& x_coords, const Image& grad_values) {
  require_same_shape(image, x_coords, "bilinear_sample_backward");
  require_same_shape(image, grad_values, "bilinear_sample_backward");
  const int h = image.height();
  const int w = image.width();
  Map grad(h, w, 0.0);
  if (w == 1) return grad;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Tap t = tap_for(x_coords(y, x), w);
      if (!t.valid) continue;
      double g = 0.0;
      for (int c = 0; c < image.channels(); ++c)
        g += grad_values(c, y, x) * (image(c, y, t.x0 + 1) - image(c, y, t.x0));
      grad(y, x) = g;
    }
  }
  return grad;
}

WarpResult warp_target_to_ref(const Image& target, const DisparityMap& disparity) {
  require_same_shape(target, disparity, "warp_target_to_ref");
  Map coords(disparity.height(), disparity.width());
  for (int y = 0; y < coords.height(); ++y)
    for (int x = 0; x < coords.width(); ++x) coords(y, x) = x - disparity(y, x);
  auto s = bilinear_sample(target, coords);
  return {std::move(s.values), std::move(s.validity)};
}

DisparityMap warp_backward(const Image& target, const DisparityMap& disparity, const Image& grad_recon) {
  require_same_shape(target, disparity, "warp_backward");
  Map coords(disparity.height(), disparity.width());
  for (int y = 0; y < coords.height(); ++y)
    for (int x = 0; x < coords.width(); ++x) coords(y, x) = x - disparity(y, x);
  Map g = bilinear_sample_backward(target, coords, grad_recon);
  for (auto& v : g.values()) v = -v;
  return g;
}

Image flip_horizontal(const Image& img) {
  Image out(img.channels(), img.height(), img.width());
  const int w = img.width();
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = img(c, y, w - 1 - x);
  out.set_augmented(img.augmented());
  return out;
}

CanonicalPair canonicalize_pair(const Image& ref, const Image& tgt, bool tgt_on_left) {
  if (!tgt_on_left) return {ref, tgt, false};
  return {flip_horizontal(ref), flip_horizontal(tgt), true};
}

DisparityMap decanonicalize_disparity(const DisparityMap& disparity, bool flipped) {
  return flipped ? flip_horizontal(disparity) : disparity;
}

}  // namespace bacon::imgeom
