#include "bacon/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "bacon/imgeom.hpp"
#include "bacon/log.hpp"

namespace bacon::distill {

namespace {

void check_indices(std::size_t k, int ref, int s, int t) {
  auto in = [k](int i) { return i >= 0 && static_cast<std::size_t>(i) < k; };
  if (!in(ref) || !in(s) || !in(t)) throw InvalidArgument("triplet view index out of range");
  if (ref == s || ref == t || s == t) throw InvalidArgument("triplet view indices must be distinct");
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

// Brightness, contrast, saturation and hue with fixed factors.
void jitter(Image& img, double fb, double fc, double fs, double hue_turn) {
  const std::size_t n = img.plane_size();
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = clip01(r[i] * fb);
    g[i] = clip01(g[i] * fb);
    b[i] = clip01(b[i] * fb);
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  mean /= static_cast<double>(std::max<std::size_t>(n, 1));
  const double ch = std::cos(2 * std::numbers::pi * hue_turn), sh = std::sin(2 * std::numbers::pi * hue_turn);
  for (std::size_t i = 0; i < n; ++i) {
    double px[3] = {r[i], g[i], b[i]};
    for (double& v : px) v = clip01((v - mean) * fc + mean);
    const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    for (double& v : px) v = clip01(gray + fs * (v - gray));
    // Rotate chroma in YIQ.
    const double y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    const double ii = 0.596 * px[0] - 0.274 * px[1] - 0.322 * px[2];
    const double q = 0.211 * px[0] - 0.523 * px[1] + 0.312 * px[2];
    const double i2 = ii * ch - q * sh, q2 = ii * sh + q * ch;
    r[i] = clip01(y + 0.956 * i2 + 0.621 * q2);
    g[i] = clip01(y - 0.272 * i2 - 0.647 * q2);
    b[i] = clip01(y - 1.106 * i2 + 1.703 * q2);
  }
}

void random_erase(Image& img, Rng& rng, const AugmentConfig& cfg) {
  const int count = uniform_int(rng, 0, cfg.max_erase);
  for (int e = 0; e < count; ++e) {
    const int w = std::max(1, static_cast<int>(std::lround(uniform(rng, cfg.erase_min_frac, cfg.erase_max_frac) * img.width())));
    const int h =
        std::max(1, static_cast<int>(std::lround(uniform(rng, cfg.erase_min_frac, cfg.erase_max_frac) * img.height())));
    const int x0 = uniform_int(rng, 0, img.width() - w);
    const int y0 = uniform_int(rng, 0, img.height() - h);
    erase_rect(img, {x0, y0, x0 + w, y0 + h}, rng);
  }
}

nlohmann::json to_json(const AdamState& a) {
  return {{"t", a.t}, {"m", stereonet::to_json(a.m)}, {"v", stereonet::to_json(a.v)}};
}

}  // namespace

Triplet make_triplet(std::span<const double> offsets, int ref, int student_tgt, int teacher_tgt) {
  check_indices(offsets.size(), ref, student_tgt, teacher_tgt);
  Triplet t;
  t.ref_idx = ref;
  t.student_tgt_idx = student_tgt;
  t.teacher_tgt_idx = teacher_tgt;
  t.B_s = std::abs(offsets[student_tgt] - offsets[ref]);
  t.B_t = std::abs(offsets[teacher_tgt] - offsets[ref]);
  if (!(t.B_s > 0) || !(t.B_t > 0)) throw InvalidArgument("triplet baselines must be positive");
  t.r = t.B_s / t.B_t;
  t.flip_student = offsets[student_tgt] < offsets[ref];
  t.flip_teacher = offsets[teacher_tgt] < offsets[ref];
  return t;
}

Triplet sample_triplet(std::span<const double> offsets, Rng& rng) {
  const int k = static_cast<int>(offsets.size());
  if (k < 3) throw InvalidArgument("triplet sampling needs at least three views");
  const int ref = uniform_int(rng, 0, k - 1);
  std::vector<int> rest;
  for (int i = 0; i < k; ++i)
    if (i != ref) rest.push_back(i);
  const int a = uniform_int(rng, 0, k - 2);
  int b = uniform_int(rng, 0, k - 3);
  if (b >= a) ++b;
  return make_triplet(offsets, ref, rest[a], rest[b]);
}

Triplet sample_triplet(const scenegen::MultiBaselineFrame& frame, Rng& rng) {
  return sample_triplet(frame.camera_offsets, rng);
}

void AugmentConfig::validate() const {
  if (!(probability >= 0 && probability <= 1)) throw InvalidArgument("augmentation probability must lie in [0,1]");
  if (!(brightness >= 0 && brightness < 1) || !(contrast >= 0 && contrast < 1) ||
      !(saturation >= 0 && saturation < 1))
    throw InvalidArgument("jitter magnitudes must lie in [0,1)");
  if (!(hue >= 0 && hue <= 0.5)) throw InvalidArgument("hue jitter must lie in [0,0.5]");
  if (max_erase < 0) throw InvalidArgument("max_erase must be non-negative");
  if (!(erase_min_frac > 0 && erase_min_frac <= erase_max_frac && erase_max_frac <= 1))
    throw InvalidArgument("erase fractions must satisfy 0 < min <= max <= 1");
}

nlohmann::json to_json(const AugmentConfig& a) {
  return {{"probability", a.probability}, {"brightness", a.brightness},       {"contrast", a.contrast},
          {"saturation", a.saturation},   {"hue", a.hue},                     {"max_erase", a.max_erase},
          {"erase_min_frac", a.erase_min_frac}, {"erase_max_frac", a.erase_max_frac}};
}

AugmentConfig augment_from_json(const nlohmann::json& j) {
  AugmentConfig a;
  a.probability = j.value("probability", a.probability);
  a.brightness = j.value("brightness", a.brightness);
  a.contrast = j.value("contrast", a.contrast);
  a.saturation = j.value("saturation", a.saturation);
  a.hue = j.value("hue", a.hue);
  a.max_erase = j.value("max_erase", a.max_erase);
  a.erase_min_frac = j.value("erase_min_frac", a.erase_min_frac);
  a.erase_max_frac = j.value("erase_max_frac", a.erase_max_frac);
  a.validate();
  return a;
}

void erase_rect(Image& img, const Rect& rect, Rng& rng) {
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > img.width() || rect.y1 > img.height() || rect.x0 > rect.x1 ||
      rect.y0 > rect.y1)
    throw InvalidArgument("erase rectangle outside image");
  for (int c = 0; c < img.channels(); ++c)
    for (int y = rect.y0; y < rect.y1; ++y)
      for (int x = rect.x0; x < rect.x1; ++x) img(c, y, x) = uniform(rng, 0.0, 1.0);
  img.set_augmented(true);
}

std::pair<Image, Image> augment_student(const Image& ref, const Image& tgt, Rng& rng, const AugmentConfig& cfg) {
  require_same_shape(ref, tgt, "augment_student");
  Image a = ref, b = tgt;
  if (uniform(rng, 0.0, 1.0) < cfg.probability && ref.channels() == 3) {
    const double fb = uniform(rng, 1 - cfg.brightness, 1 + cfg.brightness);
    const double fc = uniform(rng, 1 - cfg.contrast, 1 + cfg.contrast);
    const double fs = uniform(rng, 1 - cfg.saturation, 1 + cfg.saturation);
    const double fh = uniform(rng, -cfg.hue, cfg.hue);
    jitter(a, fb, fc, fs, fh);
    jitter(b, fb, fc, fs, fh);
  }
  if (uniform(rng, 0.0, 1.0) < cfg.probability) random_erase(a, rng, cfg);
  if (uniform(rng, 0.0, 1.0) < cfg.probability) random_erase(b, rng, cfg);
  a.set_augmented(true);
  b.set_augmented(true);
  return {std::move(a), std::move(b)};
}

double momentum_at(const MomentumSchedule& s, long step) {
  if (s.total_steps < 1) throw InvalidArgument("momentum schedule needs at least one step");
  if (step < 0 || step > s.total_steps) throw InvalidArgument("momentum step out of range");
  if (step == s.total_steps) return 1.0;
  return 1.0 - (1.0 - s.m_base) * (std::cos(std::numbers::pi * step / s.total_steps) + 1.0) / 2.0;
}

ParamSet ema_update(const ParamSet& teacher, const ParamSet& student, double m) {
  if (!(m >= 0 && m <= 1)) throw InvalidArgument("EMA momentum must lie in [0,1]");
  teacher.require_compatible(student, "ema_update");
  ParamSet out = teacher;
  for (auto& [name, t] : out.entries()) {
    const auto& s = student.at(name).data;
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = m * t.data[i] + (1.0 - m) * s[i];
  }
  return out;
}

double learning_rate(const OneCycle& s, long step) {
  if (s.total_steps < 1) throw InvalidArgument("learning-rate schedule needs at least one step");
  const double start = s.lr_max / s.div_factor;
  const double end = start / s.final_div_factor;
  const double peak = std::max(1.0, s.pct_start * s.total_steps);
  const double x = static_cast<double>(std::clamp(step, 0L, s.total_steps));
  if (x <= peak) return start + (s.lr_max - start) * (x / peak);
  const double frac = (x - peak) / std::max(1.0, s.total_steps - peak);
  return s.lr_max + (end - s.lr_max) * std::min(frac, 1.0);
}

AdamState adam_init(const ParamSet& params) { return {params.zeros_like(), params.zeros_like(), 0}; }

ParamSet adam_step(const ParamSet& params, const ParamSet& grads, AdamState& st, double lr, const AdamConfig& cfg) {
  params.require_compatible(grads, "adam_step");
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  ParamSet out = params;
  for (auto& [name, p] : out.entries()) {
    const auto& g = grads.at(name).data;
    auto& m = st.m.at(name).data;
    auto& v = st.v.at(name).data;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      p.data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (steps < 1) throw InvalidArgument("training needs at least one step");
  if (batch < 1) throw InvalidArgument("batch must be positive");
  if (crop_height < 1 || crop_width < 1) throw InvalidArgument("crop must be positive");
  if (!(lr.lr_max > 0)) throw InvalidArgument("lr_max must be positive");
  if (!(m_base > 0 && m_base < 1)) throw InvalidArgument("m_base must lie in (0,1)");
  loss.validate();
  augment.validate();
}

TrainState init_state(const stereonet::ArchConfig& arch, std::uint64_t seed) {
  TrainState s;
  s.student = stereonet::init_params(seed, arch);
  s.teacher = s.student;
  s.adam = adam_init(s.student);
  return s;
}

DisparityMap teacher_predict(const ParamSet& teacher, const Image& ref, const Image& tgt, bool tgt_on_left) {
  if (ref.augmented() || tgt.augmented()) throw InvalidArgument("teacher received an augmented image");
  const auto pair = imgeom::canonicalize_pair(ref, tgt, tgt_on_left);
  const auto out = stereonet::forward(teacher, pair.ref, pair.tgt);
  return imgeom::decanonicalize_disparity(out.disparity, pair.flipped);
}

namespace {

bool all_finite(const Map& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

StepResult train_step(const TrainState& state, std::span<const scenegen::MultiBaselineFrame> frames,
                      const TrainConfig& cfg) {
  if (frames.empty()) throw InvalidArgument("train_step needs at least one frame");
  StepResult res;
  res.teacher_grad = state.teacher.zeros_like();
  Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(state.step)}));
  ParamSet grads = state.student.zeros_like();
  losses::LossReport mean;
  const double inv_b = 1.0 / cfg.batch;

  for (int b = 0; b < cfg.batch; ++b) {
    const auto& frame = frames[uniform_int(rng, 0, static_cast<int>(frames.size()) - 1)];
    const Triplet tri = sample_triplet(frame, rng);
    if (cfg.crop_height > frame.height() || cfg.crop_width > frame.width())
      throw InvalidArgument("crop larger than the training frames");
    const int y0 = uniform_int(rng, 0, frame.height() - cfg.crop_height);
    const int x0 = uniform_int(rng, 0, frame.width() - cfg.crop_width);
    auto cut = [&](const Image& im) { return crop(im, y0, x0, cfg.crop_height, cfg.crop_width); };
    const Image ref = cut(frame.views[tri.ref_idx]);
    const Image tgt_s = cut(frame.views[tri.student_tgt_idx]);
    const Image tgt_t = cut(frame.views[tri.teacher_tgt_idx]);

    // Teacher: clean canonical pair, no gradient.
    const DisparityMap d_t = teacher_predict(state.teacher, ref, tgt_t, tri.flip_teacher);
    const auto photo_t = losses::pair_photometric(ref, tgt_t, tri.flip_teacher, d_t, cfg.loss);
    const Mask mask_t = losses::pair_valid_mask(photo_t, cfg.loss, cfg.policy);

    // Student: canonical pair, augmented.
    auto pair_s = imgeom::canonicalize_pair(ref, tgt_s, tri.flip_student);
    if (cfg.augment_enabled) {
      Rng aug_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(state.step), static_cast<std::uint64_t>(b), 1}));
      std::tie(pair_s.ref, pair_s.tgt) = augment_student(pair_s.ref, pair_s.tgt, aug_rng, cfg.augment);
    }
    stereonet::ForwardCache cache;
    const auto out_s = stereonet::forward(state.student, pair_s.ref, pair_s.tgt, &cache);
    const DisparityMap d_s = imgeom::decanonicalize_disparity(out_s.disparity, pair_s.flipped);
    if (!all_finite(d_s) || !all_finite(d_t)) {
      // Poisoned parameters; the loss is undefined, so the whole step is skipped below.
      mean.total = std::numeric_limits<double>::quiet_NaN();
      continue;
    }

    auto loss = losses::total_loss(d_s, d_t, tri.r, ref, tgt_s, tri.flip_student, mask_t, cfg.loss, cfg.policy);
    DisparityMap g = imgeom::decanonicalize_disparity(loss.grad_student, pair_s.flipped);
    for (auto& v : g.values()) v *= inv_b;
    const ParamSet gb = stereonet::backward(state.student, cache, g);
    for (auto& [name, t] : grads.entries()) {
      const auto& src = gb.at(name).data;
      for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += src[i];
    }

    mean.contrastive += inv_b * loss.report.contrastive;
    mean.photometric += inv_b * loss.report.photometric;
    mean.smoothness += inv_b * loss.report.smoothness;
    mean.total += inv_b * loss.report.total;

    SampleDiagnostics diag;
    diag.triplet = tri;
    const Mask occ = crop(frame.gt_occlusion(tri.ref_idx, tri.student_tgt_idx), y0, x0, cfg.crop_height,
                          cfg.crop_width);
    for (std::size_t i = 0; i < occ.size(); ++i)
      if (occ[i]) {
        ++diag.gt_student_occluded;
        if (loss.report.maps.attention[i] > 0) ++diag.supervised_occluded;
      }
    double sum = 0.0;
    for (double v : d_t.values()) sum += v;
    diag.mean_teacher_disparity = sum / static_cast<double>(d_t.size());
    res.samples.push_back(diag);
    if (b + 1 == cfg.batch) mean.maps = std::move(loss.report.maps);
  }
  res.report = std::move(mean);

  const MomentumSchedule sched{cfg.m_base, cfg.steps};
  res.momentum = momentum_at(sched, std::min(state.step, cfg.steps));
  res.lr = learning_rate(cfg.lr, state.step);
  res.state = state;
  res.state.step = state.step + 1;

  if (!std::isfinite(res.report.total) || !grads.all_finite()) {
    res.applied = false;
    res.state.consecutive_nonfinite = state.consecutive_nonfinite + 1;
    log::warning("step " + std::to_string(state.step) + ": non-finite loss (L_c=" +
                 std::to_string(res.report.contrastive) + ", L_p=" + std::to_string(res.report.photometric) +
                 ", L_s=" + std::to_string(res.report.smoothness) + "), update skipped");
    if (res.state.consecutive_nonfinite > 10)
      throw TrainingDiverged("training diverged at step " + std::to_string(state.step) + ": " +
                             std::to_string(res.state.consecutive_nonfinite) + " consecutive non-finite losses");
    return res;
  }
  res.state.consecutive_nonfinite = 0;
  res.state.student = adam_step(state.student, grads, res.state.adam, res.lr, cfg.adam);
  if (cfg.ema) res.state.teacher = ema_update(state.teacher, res.state.student, res.momentum);
  return res;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::json j = {{"schema", kCheckpointSchema},
                      {"id", ck.id},
                      {"step", ck.step},
                      {"config", ck.config},
                      {"student", stereonet::to_json(ck.student)},
                      {"teacher", stereonet::to_json(ck.teacher)},
                      {"adam", to_json(ck.adam)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << j.dump() << "\n";
    if (!out) throw Error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("schema", std::string{}) != kCheckpointSchema)
    throw Error("checkpoint " + path.string() + " has an unknown schema tag");
  try {
    Checkpoint ck;
    if (!j.contains("teacher")) throw Error("checkpoint " + path.string() + " has no teacher parameters");
    ck.id = j.value("id", std::string{});
    ck.step = j.at("step").get<long>();
    ck.config = j.value("config", nlohmann::json::object());
    ck.student = stereonet::params_from_json(j.at("student"));
    ck.teacher = stereonet::params_from_json(j.at("teacher"));
    ck.teacher.require_compatible(ck.student, "checkpoint");
    ck.adam.t = j.at("adam").at("t").get<long>();
    ck.adam.m = stereonet::params_from_json(j.at("adam").at("m"));
    ck.adam.v = stereonet::params_from_json(j.at("adam").at("v"));
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace bacon::distill
