#include "bacon/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bacon/imgeom.hpp"
#include "bacon/log.hpp"

namespace bacon::losses {

namespace {

using Plane = std::vector<double>;

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Replicate-padded box mean of side 2r+1.
Plane box_mean(std::span<const double> src, int h, int w, int r) {
  Plane tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    const double* row = src.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dx = -r; dx <= r; ++dx) s += row[clampi(x + dx, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  const double norm = 1.0 / ((2 * r + 1) * (2 * r + 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -r; dy <= r; ++dy) s += tmp[static_cast<std::size_t>(clampi(y + dy, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  return out;
}

// Transpose of box_mean.
Plane box_mean_adjoint(const Plane& g, int h, int w, int r) {
  Plane tmp(g.size(), 0.0), out(g.size(), 0.0);
  const double norm = 1.0 / ((2 * r + 1) * (2 * r + 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = g[static_cast<std::size_t>(y) * w + x] * norm;
      for (int dy = -r; dy <= r; ++dy) tmp[static_cast<std::size_t>(clampi(y + dy, 0, h - 1)) * w + x] += v;
    }
  for (int y = 0; y < h; ++y) {
    double* row = out.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const double v = tmp[static_cast<std::size_t>(y) * w + x];
      for (int dx = -r; dx <= r; ++dx) row[clampi(x + dx, 0, w - 1)] += v;
    }
  }
  return out;
}

struct SsimStats {
  Plane mu_a, mu_b, e_aa, e_bb, e_ab;
};

SsimStats ssim_stats(std::span<const double> a, std::span<const double> b, int h, int w, int r) {
  Plane aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  return {box_mean(a, h, w, r), box_mean(b, h, w, r), box_mean(aa, h, w, r), box_mean(bb, h, w, r),
          box_mean(ab, h, w, r)};
}

void check_ssim_inputs(const Image& a, const Image& b, const LossConfig& cfg) {
  require_same_shape(a, b, "ssim");
  if (cfg.ssim_window < 1 || cfg.ssim_window % 2 == 0) throw InvalidArgument("SSIM window must be odd and positive");
  if (cfg.ssim_window > a.height() || cfg.ssim_window > a.width())
    throw InvalidArgument("SSIM window larger than image");
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

LossConfig LossConfig::with_lambda_p(double lambda_p) {
  LossConfig c;
  c.lambda_p = lambda_p;
  c.lambda_s = 0.001 * lambda_p;
  return c;
}

void LossConfig::validate() const {
  if (!(alpha >= 0 && alpha <= 1)) throw InvalidArgument("alpha must lie in [0,1]");
  if (!(tau > 0)) throw InvalidArgument("tau must be positive");
  if (!(lambda_p >= 0) || !(lambda_s >= 0)) throw InvalidArgument("loss weights must be non-negative");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw InvalidArgument("SSIM window must be odd and positive");
  if (!(ssim_c1 > 0) || !(ssim_c2 > 0)) throw InvalidArgument("SSIM stabilizers must be positive");
}

Map ssim_map(const Image& a, const Image& b, const LossConfig& cfg) {
  check_ssim_inputs(a, b, cfg);
  const int h = a.height(), w = a.width(), r = cfg.ssim_window / 2;
  Map out(h, w, 0.0);
  for (int c = 0; c < a.channels(); ++c) {
    const SsimStats s = ssim_stats(a.plane(c), b.plane(c), h, w, r);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double va = s.e_aa[i] - s.mu_a[i] * s.mu_a[i];
      const double vb = s.e_bb[i] - s.mu_b[i] * s.mu_b[i];
      const double cov = s.e_ab[i] - s.mu_a[i] * s.mu_b[i];
      const double num = (2 * s.mu_a[i] * s.mu_b[i] + cfg.ssim_c1) * (2 * cov + cfg.ssim_c2);
      const double den = (s.mu_a[i] * s.mu_a[i] + s.mu_b[i] * s.mu_b[i] + cfg.ssim_c1) * (va + vb + cfg.ssim_c2);
      out[i] += num / den;
    }
  }
  for (auto& v : out.values()) v /= a.channels();
  return out;
}

Image ssim_backward(const Image& a, const Image& b, const LossConfig& cfg, const Map& grad_ssim) {
  check_ssim_inputs(a, b, cfg);
  require_same_shape(a, grad_ssim, "ssim_backward");
  const int h = a.height(), w = a.width(), r = cfg.ssim_window / 2;
  const double inv_c = 1.0 / a.channels();
  Image grad(a.channels(), h, w);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < a.channels(); ++c) {
    const SsimStats s = ssim_stats(a.plane(c), b.plane(c), h, w, r);
    Plane g_mu(n), g_bb(n), g_ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ma = s.mu_a[i], mb = s.mu_b[i];
      const double a1 = 2 * ma * mb + cfg.ssim_c1;
      const double a2 = 2 * (s.e_ab[i] - ma * mb) + cfg.ssim_c2;
      const double b1 = ma * ma + mb * mb + cfg.ssim_c1;
      const double b2 = (s.e_aa[i] - ma * ma) + (s.e_bb[i] - mb * mb) + cfg.ssim_c2;
      const double den = b1 * b2;
      const double ssim = a1 * a2 / den;
      const double up = grad_ssim[i] * inv_c;
      // Partials w.r.t. the raw moments mu_b, E[b²], E[ab].
      const double d_mu = ((2 * ma) * a2 + a1 * (-2 * ma)) / den - ssim * ((2 * mb) * b2 + b1 * (-2 * mb)) / den;
      const double d_bb = -ssim * b1 / den;
      const double d_ab = a1 * 2.0 / den;
      g_mu[i] = up * d_mu;
      g_bb[i] = up * d_bb;
      g_ab[i] = up * d_ab;
    }
    const Plane t_mu = box_mean_adjoint(g_mu, h, w, r);
    const Plane t_bb = box_mean_adjoint(g_bb, h, w, r);
    const Plane t_ab = box_mean_adjoint(g_ab, h, w, r);
    auto pa = a.plane(c);
    auto pb = b.plane(c);
    auto pg = grad.plane(c);
    for (std::size_t i = 0; i < n; ++i) pg[i] = t_mu[i] + 2.0 * pb[i] * t_bb[i] + pa[i] * t_ab[i];
  }
  return grad;
}

Map photometric_map(const Image& ref, const Image& recon, const LossConfig& cfg) {
  require_same_shape(ref, recon, "photometric_map");
  Map out(ref.height(), ref.width(), 0.0);
  const double inv_c = 1.0 / ref.channels();
  if (cfg.alpha > 0) {
    const Map s = ssim_map(ref, recon, cfg);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * cfg.alpha * (1.0 - s[i]);
  }
  for (int c = 0; c < ref.channels(); ++c) {
    auto pr = ref.plane(c);
    auto pq = recon.plane(c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (1.0 - cfg.alpha) * inv_c * std::abs(pr[i] - pq[i]);
  }
  return out;
}

Image photometric_backward(const Image& ref, const Image& recon, const LossConfig& cfg, const Map& grad_map) {
  require_same_shape(ref, recon, "photometric_backward");
  require_same_shape(ref, grad_map, "photometric_backward");
  Image grad(ref.channels(), ref.height(), ref.width());
  if (cfg.alpha > 0) {
    Map g_ssim(grad_map.height(), grad_map.width());
    for (std::size_t i = 0; i < g_ssim.size(); ++i) g_ssim[i] = -0.5 * cfg.alpha * grad_map[i];
    grad = ssim_backward(ref, recon, cfg, g_ssim);
  }
  const double k = (1.0 - cfg.alpha) / ref.channels();
  for (int c = 0; c < ref.channels(); ++c) {
    auto pr = ref.plane(c);
    auto pq = recon.plane(c);
    auto pg = grad.plane(c);
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += k * grad_map[i] * sgn(pq[i] - pr[i]);
  }
  return grad;
}

namespace {

// Channel-mean absolute forward differences of the image.
void image_edges(const Image& ref, Map& ex, Map& ey) {
  const int h = ref.height(), w = ref.width();
  ex = Map(h, std::max(w - 1, 0), 0.0);
  ey = Map(std::max(h - 1, 0), w, 0.0);
  const double inv_c = 1.0 / ref.channels();
  for (int c = 0; c < ref.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (x + 1 < w) ex(y, x) += inv_c * std::abs(ref(c, y, x + 1) - ref(c, y, x));
        if (y + 1 < h) ey(y, x) += inv_c * std::abs(ref(c, y + 1, x) - ref(c, y, x));
      }
  for (auto& v : ex.values()) v = std::exp(-v);
  for (auto& v : ey.values()) v = std::exp(-v);
}

}  // namespace

double smoothness_loss(const DisparityMap& disp, const Image& ref) {
  require_same_shape(ref, disp, "smoothness_loss");
  Map ex, ey;
  image_edges(ref, ex, ey);
  const int h = disp.height(), w = disp.width();
  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) sx += std::abs(disp(y, x + 1) - disp(y, x)) * ex(y, x);
      if (y + 1 < h) sy += std::abs(disp(y + 1, x) - disp(y, x)) * ey(y, x);
    }
  double loss = 0.0;
  if (!ex.empty()) loss += sx / static_cast<double>(ex.size());
  if (!ey.empty()) loss += sy / static_cast<double>(ey.size());
  return loss;
}

DisparityMap smoothness_backward(const DisparityMap& disp, const Image& ref) {
  require_same_shape(ref, disp, "smoothness_backward");
  Map ex, ey;
  image_edges(ref, ex, ey);
  const int h = disp.height(), w = disp.width();
  DisparityMap g(h, w, 0.0);
  const double nx = ex.empty() ? 0.0 : 1.0 / static_cast<double>(ex.size());
  const double ny = ey.empty() ? 0.0 : 1.0 / static_cast<double>(ey.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) {
        const double v = sgn(disp(y, x + 1) - disp(y, x)) * ex(y, x) * nx;
        g(y, x + 1) += v;
        g(y, x) -= v;
      }
      if (y + 1 < h) {
        const double v = sgn(disp(y + 1, x) - disp(y, x)) * ey(y, x) * ny;
        g(y + 1, x) += v;
        g(y, x) -= v;
      }
    }
  return g;
}

Map contrastive_map(const DisparityMap& d_student, const DisparityMap& d_teacher, double r) {
  require_same_shape(d_student, d_teacher, "contrastive_map");
  if (!(r > 0)) throw InvalidArgument("rescaling ratio must be positive");
  Map out(d_student.height(), d_student.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(d_student[i] - r * d_teacher[i]);
  return out;
}

DisparityMap contrastive_backward(const DisparityMap& d_student, const DisparityMap& d_teacher, double r,
                                  const Map& grad_map) {
  require_same_shape(d_student, d_teacher, "contrastive_backward");
  require_same_shape(d_student, grad_map, "contrastive_backward");
  if (!(r > 0)) throw InvalidArgument("rescaling ratio must be positive");
  DisparityMap g(d_student.height(), d_student.width());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_map[i] * sgn(d_student[i] - r * d_teacher[i]);
  return g;
}

Mask valid_mask(const Map& photo, const Map& identity_photo, const Mask& warp_validity, double tau,
                const LossPolicy& policy) {
  require_same_shape(photo, identity_photo, "valid_mask");
  require_same_shape(photo, warp_validity, "valid_mask");
  Mask m(photo.height(), photo.width(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    bool ok = warp_validity[i] != 0;
    if (policy.threshold_mask) ok = ok && photo[i] < tau;
    if (policy.auto_mask) ok = ok && photo[i] < identity_photo[i];
    m[i] = ok ? 1 : 0;
  }
  return m;
}

AttentionMap attention_map(const Mask& teacher_mask, const Mask& student_mask, bool occlusion_aware) {
  require_same_shape(teacher_mask, student_mask, "attention_map");
  AttentionMap a(teacher_mask.height(), teacher_mask.width(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!teacher_mask[i])
      a[i] = 0;
    else if (student_mask[i])
      a[i] = 1;
    else
      a[i] = occlusion_aware ? 2 : 1;
  }
  return a;
}

PairPhotometric pair_photometric(const Image& ref, const Image& tgt, bool tgt_on_left, const DisparityMap& disparity,
                                 const LossConfig& cfg) {
  require_same_shape(ref, tgt, "pair_photometric");
  require_same_shape(ref, disparity, "pair_photometric");
  const auto pair = imgeom::canonicalize_pair(ref, tgt, tgt_on_left);
  const DisparityMap d = imgeom::decanonicalize_disparity(disparity, tgt_on_left);  // flip is an involution
  const auto warp = imgeom::warp_target_to_ref(pair.tgt, d);
  Map photo = photometric_map(pair.ref, warp.recon, cfg);
  Map identity = photometric_map(pair.ref, pair.tgt, cfg);
  if (!tgt_on_left) return {std::move(photo), std::move(identity), warp.validity};
  return {imgeom::flip_horizontal(photo), imgeom::flip_horizontal(identity), imgeom::flip_horizontal(warp.validity)};
}

DisparityMap pair_photometric_backward(const Image& ref, const Image& tgt, bool tgt_on_left,
                                       const DisparityMap& disparity, const LossConfig& cfg, const Map& grad_photo) {
  const auto pair = imgeom::canonicalize_pair(ref, tgt, tgt_on_left);
  const DisparityMap d = imgeom::decanonicalize_disparity(disparity, tgt_on_left);
  const Map g = tgt_on_left ? imgeom::flip_horizontal(grad_photo) : grad_photo;
  const auto warp = imgeom::warp_target_to_ref(pair.tgt, d);
  const Image g_recon = photometric_backward(pair.ref, warp.recon, cfg, g);
  const DisparityMap g_d = imgeom::warp_backward(pair.tgt, d, g_recon);
  return imgeom::decanonicalize_disparity(g_d, tgt_on_left);
}

Mask pair_valid_mask(const PairPhotometric& p, const LossConfig& cfg, const LossPolicy& policy) {
  return valid_mask(p.photo, p.identity, p.validity, cfg.tau, policy);
}

LossResult total_loss(const DisparityMap& d_student, const DisparityMap& d_teacher, double r, const Image& ref,
                      const Image& tgt_student, bool student_target_on_left, const Mask& teacher_mask,
                      const LossConfig& cfg, const LossPolicy& policy) {
  require_same_shape(d_student, d_teacher, "total_loss");
  require_same_shape(d_student, teacher_mask, "total_loss");
  const double n = static_cast<double>(d_student.size());

  LossResult out;
  LossReport& rep = out.report;
  const PairPhotometric sp = pair_photometric(ref, tgt_student, student_target_on_left, d_student, cfg);
  rep.maps.student_mask = pair_valid_mask(sp, cfg, policy);
  rep.maps.teacher_mask = teacher_mask;
  rep.maps.attention = attention_map(teacher_mask, rep.maps.student_mask, policy.occlusion_aware);
  rep.maps.contrastive = contrastive_map(d_student, d_teacher, r);
  rep.maps.photometric = sp.photo;

  double c_sum = 0.0;
  for (std::size_t i = 0; i < rep.maps.contrastive.size(); ++i)
    c_sum += rep.maps.attention[i] * rep.maps.contrastive[i];
  rep.contrastive = c_sum / n;

  const std::size_t n_mask = count_true(rep.maps.student_mask);
  const double p_norm = policy.photometric_masked_mean ? static_cast<double>(n_mask) : n;
  double p_sum = 0.0;
  for (std::size_t i = 0; i < sp.photo.size(); ++i)
    if (rep.maps.student_mask[i]) p_sum += sp.photo[i];
  if (n_mask == 0) {
    if (policy.use_photometric) log::warning("empty student mask: photometric term contributes 0 (degenerate batch)");
    rep.photometric = 0.0;
  } else {
    rep.photometric = p_sum / p_norm;
  }
  rep.smoothness = smoothness_loss(d_student, ref);

  rep.total = 0.0;
  if (policy.use_contrastive) rep.total += rep.contrastive;
  if (policy.use_photometric) rep.total += cfg.lambda_p * rep.photometric;
  if (policy.use_smoothness) rep.total += cfg.lambda_s * rep.smoothness;

  out.grad_student = DisparityMap(d_student.height(), d_student.width(), 0.0);
  DisparityMap& g = out.grad_student;
  if (policy.use_contrastive) {
    Map w(d_student.height(), d_student.width());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rep.maps.attention[i] / n;
    const auto gc = contrastive_backward(d_student, d_teacher, r, w);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
  }
  if (policy.use_photometric && n_mask > 0) {
    Map w(d_student.height(), d_student.width());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rep.maps.student_mask[i] ? cfg.lambda_p / p_norm : 0.0;
    const auto gp = pair_photometric_backward(ref, tgt_student, student_target_on_left, d_student, cfg, w);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gp[i];
  }
  if (policy.use_smoothness) {
    const auto gs = smoothness_backward(d_student, ref);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.lambda_s * gs[i];
  }
  return out;
}

}  // namespace bacon::losses
