#pragma once

#include <cmath>
#include <functional>

#include "bacon/config.hpp"
#include "bacon/experiment.hpp"
#include "bacon/rng.hpp"
#include "bacon/tensor.hpp"

namespace bacon::test {

inline Image random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(c, h, w);
  for (auto& v : img.values()) v = uniform(rng, 0.05, 0.95);
  return img;
}

inline Map random_map(int h, int w, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  Map m(h, w);
  for (auto& v : m.values()) v = uniform(rng, lo, hi);
  return m;
}

inline Mask random_mask(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Mask m(h, w);
  for (auto& v : m.values()) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 1));
  return m;
}

// Smooth random texture: sum of a few sinusoids per channel.
inline Image smooth_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(3, h, w);
  for (int c = 0; c < 3; ++c) {
    double a[4], fx[4], fy[4], ph[4];
    for (int i = 0; i < 4; ++i) {
      a[i] = uniform(rng, 0.05, 0.12);
      fx[i] = uniform(rng, 0.1, 0.9);
      fy[i] = uniform(rng, 0.1, 0.9);
      ph[i] = uniform(rng, 0, 6.28);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = 0.5;
        for (int i = 0; i < 4; ++i) v += a[i] * std::sin(fx[i] * x + fy[i] * y + ph[i]);
        img(c, y, x) = v;
      }
  }
  return img;
}

// Max over entries of |a−n| / max(|a|, |n|, floor).
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

// The standard small desk dataset used by several tests.
inline std::vector<scenegen::MultiBaselineFrame> standard_frames(int n, std::uint64_t seed) {
  auto cfg = config::default_config();
  cfg.dataset.n_frames = n;
  cfg.dataset.seed = seed;
  return experiment::generate_frames(cfg.dataset, cfg.arch);
}

}  // namespace bacon::test
