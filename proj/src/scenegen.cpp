#include "bacon/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bacon/rng.hpp"

namespace bacon::scenegen {

namespace {

double hash01(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::uint64_t salt) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B1ULL + salt));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0x85EBCA77ULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::string to_string(TextureFamily f) {
  switch (f) {
    case TextureFamily::noise:
      return "noise";
    case TextureFamily::checker:
      return "checker";
    case TextureFamily::gradient_mix:
      return "gradient-mix";
  }
  return "noise";
}

TextureFamily texture_family_from_string(const std::string& s) {
  if (s == "noise") return TextureFamily::noise;
  if (s == "checker") return TextureFamily::checker;
  if (s == "gradient-mix") return TextureFamily::gradient_mix;
  throw InvalidArgument("unknown texture family '" + s + "'");
}

void SceneSpec::validate() const {
  if (width < 32 || height < 32) throw InvalidArgument("scene width and height must be >= 32");
  if (!(focal > 0)) throw InvalidArgument("focal length must be positive");
  if (!(background_depth > 0)) throw InvalidArgument("background depth must be positive");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (!(l.depth > 0)) throw InvalidArgument("layer " + std::to_string(i) + " depth must be positive");
    if (!(l.depth < background_depth))
      throw InvalidArgument("layer " + std::to_string(i) + " must be nearer than the background");
    if (!(l.x1 > l.x0) || !(l.y1 > l.y0)) throw InvalidArgument("layer " + std::to_string(i) + " has an empty rectangle");
  }
}

PlaneTexture::PlaneTexture(TextureFamily family, std::uint64_t seed) : family_(family), seed_(seed) {
  Rng rng(splitmix64(seed ^ 0x5bd1e995ULL));
  for (int c = 0; c < 3; ++c) {
    base_[c] = uniform(rng, 0.25, 0.75);
    alt_[c] = uniform(rng, 0.1, 0.9);
  }
  checker_cell_ = uniform(rng, 4.0, 10.0);
  gradient_s_ = uniform(rng, -0.004, 0.004);
  gradient_t_ = uniform(rng, -0.006, 0.006);
}

// Value noise with quintic interpolation; three octaves at 3, 6 and 12 px cells.
double PlaneTexture::noise(double s, double t, std::uint64_t salt) const {
  static constexpr std::array<double, 3> kCell{3.0, 6.0, 12.0};
  static constexpr std::array<double, 3> kAmp{0.5, 0.3, 0.2};
  double acc = 0.0;
  for (std::size_t o = 0; o < kCell.size(); ++o) {
    const double u = s / kCell[o];
    const double v = t / kCell[o];
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const auto iu = static_cast<std::int64_t>(fu);
    const auto iv = static_cast<std::int64_t>(fv);
    const double a = fade(u - fu);
    const double b = fade(v - fv);
    const std::uint64_t sl = salt * 31 + o;
    const double v00 = hash01(seed_, iu, iv, sl);
    const double v10 = hash01(seed_, iu + 1, iv, sl);
    const double v01 = hash01(seed_, iu, iv + 1, sl);
    const double v11 = hash01(seed_, iu + 1, iv + 1, sl);
    const double top = v00 + a * (v10 - v00);
    const double bottom = v01 + a * (v11 - v01);
    acc += kAmp[o] * (top + b * (bottom - top));
  }
  return acc;
}

std::array<double, 3> PlaneTexture::operator()(double s, double t) const {
  std::array<double, 3> rgb{};
  const double lum = noise(s, t, 0) - 0.5;
  switch (family_) {
    case TextureFamily::noise:
      for (int c = 0; c < 3; ++c)
        rgb[c] = clamp01(base_[c] + 0.7 * (0.75 * lum + 0.25 * (noise(s, t, 1 + c) - 0.5)));
      break;
    case TextureFamily::checker: {
      const auto cs = static_cast<std::int64_t>(std::floor(s / checker_cell_));
      const auto ct = static_cast<std::int64_t>(std::floor(t / checker_cell_));
      const bool odd = ((cs + ct) & 1) != 0;
      for (int c = 0; c < 3; ++c) rgb[c] = clamp01((odd ? alt_[c] : base_[c]) + 0.35 * lum);
      break;
    }
    case TextureFamily::gradient_mix: {
      const auto cs = static_cast<std::int64_t>(std::floor(s / checker_cell_));
      const auto ct = static_cast<std::int64_t>(std::floor(t / checker_cell_));
      const double check = ((cs + ct) & 1) != 0 ? 0.12 : -0.12;
      const double ramp = gradient_s_ * s + gradient_t_ * t;
      for (int c = 0; c < 3; ++c) rgb[c] = clamp01(base_[c] + ramp + 0.5 * lum + check * (c == 1 ? -1.0 : 1.0));
      break;
    }
  }
  return rgb;
}

double MultiBaselineFrame::baseline(int i, int j) const {
  return std::abs(camera_offsets.at(i) - camera_offsets.at(j));
}

std::size_t MultiBaselineFrame::pair_index(int ref, int tgt) const {
  const int k = n_views();
  if (ref < 0 || tgt < 0 || ref >= k || tgt >= k) throw InvalidArgument("view index out of range");
  if (ref == tgt) throw InvalidArgument("reference and target views must differ");
  return static_cast<std::size_t>(ref) * k + tgt;
}

const Map& MultiBaselineFrame::gt_disparity(int ref, int tgt) const {
  const Map& m = disparity.at(pair_index(ref, tgt));
  if (m.empty()) throw InvalidArgument("ground-truth disparity missing for pair");
  return m;
}

const Mask& MultiBaselineFrame::gt_occlusion(int ref, int tgt) const {
  const Mask& m = occlusion.at(pair_index(ref, tgt));
  if (m.empty()) throw InvalidArgument("ground-truth occlusion missing for pair");
  return m;
}

DisparityMap gt_disparity_from_depth(const Map& depth, double baseline, double focal) {
  if (!(baseline >= 0)) throw InvalidArgument("baseline must be non-negative");
  DisparityMap d(depth.height(), depth.width());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double z = depth[i];
    if (!(z > 0)) throw InvalidArgument("depth must be positive");
    d[i] = std::isinf(z) ? 0.0 : baseline * focal / z;
  }
  return d;
}

Mask gt_occlusion_mask(const MultiBaselineFrame& frame, int ref_idx, int tgt_idx) {
  frame.pair_index(ref_idx, tgt_idx);
  const Map& zr = frame.depth.at(ref_idx);
  const Map& zt = frame.depth.at(tgt_idx);
  const int h = zr.height();
  const int w = zr.width();
  // Signed shift: a point at depth z moves by -(o_t - o_r)·f/z columns.
  const double shift_num = (frame.camera_offsets[tgt_idx] - frame.camera_offsets[ref_idx]) * frame.focal;
  Mask occ(h, w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double z = zr(y, x);
      const double xt = x - shift_num / z;
      if (xt < 0.0 || xt > w - 1) {
        occ(y, x) = 1;
        continue;
      }
      const int col = static_cast<int>(std::lround(xt));
      if (zt(y, col) < z * (1.0 - 1e-12)) occ(y, x) = 1;
    }
  }
  return occ;
}

std::vector<double> rig_offsets(const RigConfig& rig) {
  std::vector<double> offsets(static_cast<std::size_t>(rig.n_views));
  const double centre = 0.5 * (rig.n_views - 1);
  for (int k = 0; k < rig.n_views; ++k) offsets[k] = (k - centre) * rig.baseline_step;
  return offsets;
}

double max_rig_disparity(const SceneSpec& spec, const RigConfig& rig) {
  double z_min = spec.background_depth;
  for (const auto& l : spec.layers) z_min = std::min(z_min, l.depth);
  return (rig.n_views - 1) * rig.baseline_step * spec.focal / z_min;
}

MultiBaselineFrame render_frame(const SceneSpec& spec, const RigConfig& rig, std::uint64_t rng_seed) {
  spec.validate();
  if (rig.n_views < 2) throw InvalidArgument("render_frame needs at least two views");
  if (!(rig.baseline_step > 0)) throw InvalidArgument("baseline step must be positive");
  if (rig.d_max > 0) {
    const double widest = max_rig_disparity(spec, rig);
    if (widest > rig.d_max - 1)
      throw DisparityOverflow("disparity overflow: widest-baseline disparity " + std::to_string(widest) +
                              " px exceeds network range [0, " + std::to_string(rig.d_max - 1) + "]");
  }

  MultiBaselineFrame frame;
  frame.id = "seed_" + std::to_string(rng_seed);
  frame.seed = rng_seed;
  frame.spec = spec;
  frame.focal = spec.focal;
  frame.camera_offsets = rig_offsets(rig);

  const int k_views = rig.n_views;
  const int h = spec.height;
  const int w = spec.width;
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);

  // Nearest first; equal depths keep the lower layer index in front.
  std::vector<std::size_t> order(spec.layers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return spec.layers[a].depth < spec.layers[b].depth; });

  std::vector<PlaneTexture> layer_tex;
  layer_tex.reserve(spec.layers.size());
  for (const auto& l : spec.layers) layer_tex.emplace_back(spec.texture_family, l.texture_seed);
  const PlaneTexture background_tex(spec.texture_family, derive_seed(rng_seed, {0xB6}));

  for (int k = 0; k < k_views; ++k) {
    Image view(3, h, w);
    Map depth(h, w);
    const double fo = spec.focal * frame.camera_offsets[k];
    for (int y = 0; y < h; ++y) {
      const double t = y - cy;
      for (int x = 0; x < w; ++x) {
        const double u = x - cx;
        bool hit = false;
        for (std::size_t idx : order) {
          const Layer& l = spec.layers[idx];
          const double s = u + fo / l.depth;
          if (s >= spec.focal * l.x0 && s <= spec.focal * l.x1 && t >= spec.focal * l.y0 && t <= spec.focal * l.y1) {
            const auto rgb = layer_tex[idx](s, t);
            for (int c = 0; c < 3; ++c) view(c, y, x) = rgb[c];
            depth(y, x) = l.depth;
            hit = true;
            break;
          }
        }
        if (!hit) {
          const double s = u + fo / spec.background_depth;
          const auto rgb = background_tex(s, t);
          for (int c = 0; c < 3; ++c) view(c, y, x) = rgb[c];
          depth(y, x) = spec.background_depth;
        }
      }
    }
    frame.views.push_back(std::move(view));
    frame.depth.push_back(std::move(depth));
  }

  frame.disparity.assign(static_cast<std::size_t>(k_views) * k_views, Map{});
  frame.occlusion.assign(static_cast<std::size_t>(k_views) * k_views, Mask{});
  for (int i = 0; i < k_views; ++i) {
    for (int j = 0; j < k_views; ++j) {
      if (i == j) continue;
      Map d = gt_disparity_from_depth(frame.depth[i], frame.baseline(i, j), frame.focal);
      // Disparities are persisted as float32; keep memory and disk identical.
      for (auto& v : d.values()) v = static_cast<double>(static_cast<float>(v));
      frame.disparity[frame.pair_index(i, j)] = std::move(d);
      frame.occlusion[frame.pair_index(i, j)] = gt_occlusion_mask(frame, i, j);
    }
  }
  return frame;
}

std::vector<double> exact_depth_candidates(double focal, const RigConfig& rig, double z_min, double z_max) {
  if (!(z_min > 0) || !(z_max >= z_min)) throw InvalidArgument("invalid depth range");
  const double fb = focal * rig.baseline_step;
  const long d_lo = std::max(1L, static_cast<long>(std::ceil(fb / z_max)));
  const long d_hi = static_cast<long>(std::floor(fb / z_min));
  std::vector<double> out;
  for (long d = d_lo; d <= d_hi; ++d) {
    const double z = fb / static_cast<double>(d);
    if (z < z_min || z > z_max) continue;
    bool exact = true;
    for (int n = 1; n < rig.n_views && exact; ++n) {
      const double disp = n * rig.baseline_step * focal / z;
      exact = disp == static_cast<double>(n * d) && static_cast<double>(static_cast<float>(disp)) == disp;
    }
    // Per-view plane offsets f·o_k/z must be exact too so textures line up bit for bit.
    for (double o : rig_offsets(rig)) {
      const double shift = focal * o / z;
      exact = exact && shift * 2.0 == std::round(shift * 2.0);
    }
    if (exact) out.push_back(z);
  }
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

SceneSpec sample_scene(const SceneRanges& ranges, const ImageGeometry& geom, const RigConfig& rig,
                       std::uint64_t seed) {
  const auto depths = exact_depth_candidates(geom.focal, rig, ranges.depth_min, ranges.depth_max);
  if (depths.size() < 2) throw InvalidArgument("depth range admits fewer than two exact depths");
  if (ranges.min_layers < 0 || ranges.max_layers < ranges.min_layers) throw InvalidArgument("invalid layer count range");

  Rng rng(derive_seed(seed, {0x5CE7E}));
  SceneSpec spec;
  spec.focal = geom.focal;
  spec.width = geom.width;
  spec.height = geom.height;
  spec.texture_family = static_cast<TextureFamily>(uniform_int(rng, 0, 2));

  // depths are sorted far to near; the background never takes the nearest one.
  const int bg_idx = uniform_int(rng, 0, static_cast<int>(depths.size()) - 2);
  spec.background_depth = depths[bg_idx];

  const double cx = 0.5 * (geom.width - 1);
  const double cy = 0.5 * (geom.height - 1);
  const int n_layers = uniform_int(rng, ranges.min_layers, ranges.max_layers);
  for (int i = 0; i < n_layers; ++i) {
    Layer l;
    l.depth = depths[uniform_int(rng, bg_idx + 1, static_cast<int>(depths.size()) - 1)];
    const double lw = uniform(rng, ranges.min_layer_width, ranges.max_layer_width) * geom.width;
    const double lh = uniform(rng, ranges.min_layer_height, ranges.max_layer_height) * geom.height;
    const double uc = uniform(rng, 0.15, 0.85) * geom.width;
    const double vc = uniform(rng, 0.2, 0.8) * geom.height;
    // Rig centre has zero offset, so the centre view sees u = cx + f·X/Z.
    l.x0 = (uc - 0.5 * lw - cx) / geom.focal;
    l.x1 = (uc + 0.5 * lw - cx) / geom.focal;
    l.y0 = (vc - 0.5 * lh - cy) / geom.focal;
    l.y1 = (vc + 0.5 * lh - cy) / geom.focal;
    l.texture_seed = derive_seed(seed, {0x1A7E, static_cast<std::uint64_t>(i)});
    spec.layers.push_back(l);
  }
  return spec;
}

}  // namespace bacon::scenegen
