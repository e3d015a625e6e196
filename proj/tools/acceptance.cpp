// Acceptance checks for the BaCon reimplementation. Prints one PASS/FAIL line
// per criterion and exits non-zero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "bacon/config.hpp"
#include "bacon/dataset.hpp"
#include "bacon/distill.hpp"
#include "bacon/evalkit.hpp"
#include "bacon/experiment.hpp"
#include "bacon/imgeom.hpp"
#include "bacon/log.hpp"
#include "bacon/losses.hpp"
#include "bacon/rng.hpp"
#include "bacon/stereonet.hpp"

using namespace bacon;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Image random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(c, h, w);
  for (auto& v : img.values()) v = uniform(rng, 0.05, 0.95);
  return img;
}

Map random_map(int h, int w, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  Map m(h, w);
  for (auto& v : m.values()) v = uniform(rng, lo, hi);
  return m;
}

Mask random_mask(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Mask m(h, w);
  for (auto& v : m.values()) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 1));
  return m;
}

// Band-limited texture, so finite differences through warps stay smooth.
Image smooth_image(int h, int w, std::uint64_t seed) {
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

double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Worst relative error of `analytic` against central differences of f over x.
double fd_check(std::span<double> x, std::span<const double> analytic, const std::function<double()>& f,
                double floor = 1e-6, double h = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * h), floor));
  }
  return worst;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Threshold in the widest gap among the middle photometric values, so about
// half the student mask is set and no pixel sits near the step.
double split_tau(const Map& photo) {
  std::vector<double> sorted(photo.values().begin(), photo.values().end());
  std::ranges::sort(sorted);
  std::size_t best = sorted.size() * 2 / 5;
  for (std::size_t i = best; i < sorted.size() * 3 / 5; ++i)
    if (sorted[i + 1] - sorted[i] > sorted[best + 1] - sorted[best]) best = i;
  return 0.5 * (sorted[best] + sorted[best + 1]);
}

std::vector<scenegen::MultiBaselineFrame> standard_frames(int n) {
  auto d = config::default_config().dataset;
  d.n_frames = n;
  return experiment::generate_frames(d, config::default_config().arch);
}

// ---------------------------------------------------------------- fast checks

Verdict loss_identities() {
  Verdict v;
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Map dt = random_map(24, 40, 0, 40, seed);
    for (double r : {0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.75, 4.0 / 3.0, 1.5, 2.0, 3.0, 4.0}) {
      Map ds = dt;
      for (auto& x : ds.values()) x *= r;
      for (double c : losses::contrastive_map(ds, dt, r).values()) failures += c != 0.0;
    }
    const Image a = random_image(3, 24, 40, 100 + seed);
    for (double p : losses::photometric_map(a, a, {}).values()) failures += p != 0.0;
    failures += losses::smoothness_loss(Map(24, 40, 0.5 + static_cast<double>(seed)), a) != 0.0;
  }
  v.pass = failures == 0;
  v.detail = fmt("%d non-zero values over contrastive, photometric and smoothness identities", failures);
  return v;
}

Verdict attention_truth_table() {
  std::array<long, 4> seen{};
  long wrong = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Mask mt = random_mask(32, 48, seed), ms = random_mask(32, 48, 1000 + seed);
    const auto a = losses::attention_map(mt, ms);
    for (std::size_t i = 0; i < mt.size(); ++i) {
      const int expect = !mt[i] ? 0 : (ms[i] ? 1 : 2);
      wrong += a[i] != expect;
      seen[2 * mt[i] + ms[i]]++;
    }
  }
  Verdict v;
  v.pass = wrong == 0 && std::ranges::all_of(seen, [](long n) { return n > 0; });
  v.detail = fmt("%ld mismatches; cases (Mt,Ms)=00:%ld 01:%ld 10:%ld 11:%ld", wrong, seen[0], seen[1], seen[2],
                 seen[3]);
  return v;
}

Verdict gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const losses::LossConfig cfg{};
  std::map<std::string, double> err;
  {
    const Image a = random_image(3, 8, 8, 10);
    Image b = random_image(3, 8, 8, 11);
    const Map g = random_map(8, 8, -1, 1, 12);
    err["ssim"] = fd_check(b.values(), losses::ssim_backward(a, b, cfg, g).values(),
                           [&] { return dot(losses::ssim_map(a, b, cfg).values(), g.values()); });
    err["photometric"] = fd_check(b.values(), losses::photometric_backward(a, b, cfg, g).values(),
                                  [&] { return dot(losses::photometric_map(a, b, cfg).values(), g.values()); });
  }
  {
    const Image img = random_image(3, 8, 8, 20);
    Map d = random_map(8, 8, 0, 10, 21);
    err["smoothness"] = fd_check(d.values(), losses::smoothness_backward(d, img).values(),
                                 [&] { return losses::smoothness_loss(d, img); });
  }
  {
    Map ds = random_map(8, 8, 0, 10, 30);
    const Map dt = random_map(8, 8, 0, 10, 31), g = random_map(8, 8, 0, 2, 32);
    err["contrastive"] = fd_check(ds.values(), losses::contrastive_backward(ds, dt, 0.5, g).values(),
                                  [&] { return dot(losses::contrastive_map(ds, dt, 0.5).values(), g.values()); });
  }
  {
    const Image ref = smooth_image(8, 8, 40), tgt = smooth_image(8, 8, 41);
    const Map dt = random_map(8, 8, 0.5, 3, 42);
    const Mask mt = random_mask(8, 8, 43);
    double worst = 0;
    for (bool left : {false, true}) {
      Map ds = random_map(8, 8, 0.3, 2.7, 44);
      losses::LossConfig c = cfg;
      c.tau = 1e9;
      c.tau = split_tau(losses::total_loss(ds, dt, 0.5, ref, tgt, left, mt, c).report.maps.photometric);
      const auto res = losses::total_loss(ds, dt, 0.5, ref, tgt, left, mt, c);
      worst = std::max(worst, fd_check(ds.values(), res.grad_student.values(), [&] {
                         return losses::total_loss(ds, dt, 0.5, ref, tgt, left, mt, c).report.total;
                       }));
    }
    err["total"] = worst;
  }
  double end_to_end = 0;
  {
    // Full four-layer dilated encoder on a 16×32 pair.
    stereonet::ArchConfig a;
    a.d_max = 12;
    a.hidden_channels = a.feature_channels = 6;
    const Image wide = smooth_image(16, 35, 50);
    const Image ref = crop(wide, 0, 3, 16, 32), tgt = crop(wide, 0, 0, 16, 32);
    auto p = stereonet::init_params(51, a);
    const Map dt = random_map(16, 32, 1.5, 3.5, 52);
    const Mask mt = random_mask(16, 32, 53);
    losses::LossConfig c = cfg;
    auto total = [&](stereonet::ForwardCache* cache) {
      return losses::total_loss(stereonet::forward(p, ref, tgt, cache).disparity, dt, 1.0, ref, tgt, false, mt, c);
    };
    c.tau = 1e9;
    c.tau = split_tau(total(nullptr).report.maps.photometric);
    stereonet::ForwardCache cache;
    const auto res = total(&cache);
    const auto an = stereonet::backward(p, cache, res.grad_student);
    for (auto& [name, t] : p.entries())
      end_to_end = std::max(end_to_end, fd_check(t.data, an.at(name).data,
                                                 [&] { return total(nullptr).report.total; }, 1e-6));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Verdict v;
  double worst_loss = 0;
  std::ostringstream os;
  for (const auto& [k, e] : err) {
    worst_loss = std::max(worst_loss, e);
    os << k << " " << fmt("%.2e", e) << ", ";
  }
  os << "end-to-end " << fmt("%.2e", end_to_end) << ", " << fmt("%.1f s", secs);
  v.pass = worst_loss < 1e-4 && end_to_end < 1e-3 && secs < 120;
  v.detail = os.str();
  return v;
}

Verdict stop_gradient_and_ema(std::span<const scenegen::MultiBaselineFrame> frames) {
  stereonet::ArchConfig a;
  a.hidden_channels = a.feature_channels = 8;
  distill::TrainConfig tc;
  tc.steps = 10;
  tc.batch = 2;
  tc.crop_height = 32;
  tc.crop_width = 128;
  tc.lr.total_steps = tc.steps;
  auto st = distill::init_state(a, 7);
  long nonzero_grad = 0, ema_mismatch = 0;
  for (int k = 0; k < 3; ++k) {
    const auto r = distill::train_step(st, frames, tc);
    for (const auto& [_, t] : r.teacher_grad.entries())
      for (double g : t.data) nonzero_grad += g != 0.0;
    for (const auto& [name, t] : r.state.teacher.entries())
      for (std::size_t i = 0; i < t.data.size(); ++i)
        ema_mismatch += t.data[i] != r.momentum * st.teacher.at(name).data[i] +
                                        (1 - r.momentum) * r.state.student.at(name).data[i];
    st = r.state;
  }
  const distill::MomentumSchedule ms{0.996, 5000};
  const bool ends = distill::momentum_at(ms, 0) == 0.996 && distill::momentum_at(ms, 5000) == 1.0;
  Verdict v;
  v.pass = nonzero_grad == 0 && ema_mismatch == 0 && ends;
  v.detail = fmt("%ld non-zero teacher gradients, %ld EMA mismatches, m(0)=%.3f m(K)=%.3f", nonzero_grad,
                 ema_mismatch, distill::momentum_at(ms, 0), distill::momentum_at(ms, 5000));
  return v;
}

Verdict geometry_oracle(std::span<const scenegen::MultiBaselineFrame> frames) {
  double worst = 0;
  long ratio_bad = 0;
  for (const auto& f : frames) {
    const int k = f.n_views();
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        if (i == j) continue;
        const bool left = f.target_on_left(i, j);
        const auto pair = imgeom::canonicalize_pair(f.views[i], f.views[j], left);
        const Map d = left ? imgeom::flip_horizontal(f.gt_disparity(i, j)) : f.gt_disparity(i, j);
        const Mask occ = left ? imgeom::flip_horizontal(f.gt_occlusion(i, j)) : f.gt_occlusion(i, j);
        const auto w = imgeom::warp_target_to_ref(pair.tgt, d);
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < f.height(); ++y)
            for (int x = 0; x < f.width(); ++x)
              if (!occ(y, x)) worst = std::max(worst, std::abs(w.recon(c, y, x) - pair.ref(c, y, x)));
        for (int t = 0; t < k; ++t) {
          if (t == i || t == j) continue;
          const auto tri = distill::make_triplet(f.camera_offsets, i, j, t);
          const Map& ds = f.gt_disparity(i, j);
          const Map& dt = f.gt_disparity(i, t);
          for (std::size_t p = 0; p < ds.size(); ++p) ratio_bad += ds[p] * tri.B_t != dt[p] * tri.B_s;
        }
      }
  }
  Verdict v;
  v.pass = worst <= 1e-6 && ratio_bad == 0;
  v.detail = fmt("%zu frames, worst visible warp residual %.2e, %ld pixels violating d_s*B_t = d_t*B_s",
                 frames.size(), worst, ratio_bad);
  return v;
}

Verdict metric_suite() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Map gt = random_map(20, 30, 1, 60, seed), pred = random_map(20, 30, 0, 64, 100 + seed);
    const Mask valid = random_mask(20, 30, 200 + seed);
    double abs_sum = 0;
    long n = 0, out3 = 0, out1 = 0, d1 = 0;
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 30; ++x) {
        if (!valid(y, x)) continue;
        const double e = std::abs(pred(y, x) - gt(y, x));
        abs_sum += e;
        ++n;
        out3 += e > 3;
        out1 += e > 1;
        d1 += e > 3 && e > 0.05 * gt(y, x);
      }
    const double dn = static_cast<double>(n);
    worst = std::max({worst, std::abs(evalkit::epe(pred, gt, valid) - abs_sum / dn),
                      std::abs(evalkit::outlier_rate(pred, gt, valid, 3) - 100.0 * out3 / dn),
                      std::abs(evalkit::outlier_rate(pred, gt, valid, 1) - 100.0 * out1 / dn),
                      std::abs(evalkit::d1_rate(pred, gt, valid) - 100.0 * d1 / dn)});
  }
  // D1 needs both conjuncts: 4 px on 100 px is within 5%, 4 px on 50 px is not,
  // 2 px on 10 px is under the 3 px bound.
  Map gt(1, 3), pred(1, 3);
  gt[0] = 100, pred[0] = 104;
  gt[1] = 50, pred[1] = 54;
  gt[2] = 10, pred[2] = 12;
  const Mask all(1, 3, 1);
  Mask only(1, 3, 0);
  bool conj = true;
  for (int i = 0; i < 3; ++i) {
    std::fill(only.values().begin(), only.values().end(), 0);
    only[std::size_t(i)] = 1;
    conj = conj && evalkit::d1_rate(pred, gt, only) == (i == 1 ? 100.0 : 0.0);
  }
  conj = conj && std::abs(evalkit::d1_rate(pred, gt, all) - 100.0 / 3.0) < 1e-12;
  Verdict v;
  v.pass = worst <= 1e-12 && conj;
  v.detail = fmt("worst oracle deviation %.1e; D1 conjunct cases %s", worst, conj ? "hold" : "violated");
  return v;
}

Verdict zero_network(std::span<const scenegen::MultiBaselineFrame> frames) {
  const auto rep = evalkit::evaluate(evalkit::zero_predictor(), frames, {});
  const auto& all = evalkit::row(rep.rows, evalkit::Region::all);
  Verdict v;
  v.pass = all.outlier_rate == 100.0;
  v.detail = fmt("constant-zero network: %.2f%% >3px outliers on %zu frames", all.outlier_rate, frames.size());
  return v;
}

Verdict determinism() {
  auto cfg = config::default_config();
  cfg.arch.hidden_channels = cfg.arch.feature_channels = 8;
  cfg.training.steps = 50;
  cfg.training.batch = 1;
  cfg.training.crop_height = 32;
  cfg.training.crop_width = 128;
  cfg.dataset.n_frames = 4;
  const auto frames = experiment::generate_frames(cfg.dataset, cfg.arch);
  experiment::TrainOptions o;
  o.evaluate = false;
  o.monitor_frames = 0;
  const auto a = experiment::run_training(cfg, frames, {}, o);
  const auto b = experiment::run_training(cfg, frames, {}, o);
  bool same_trace = a.trace.size() == 50 && b.trace.size() == 50;
  for (std::size_t i = 0; same_trace && i < a.trace.size(); ++i)
    same_trace = a.trace[i].total == b.trace[i].total && a.trace[i].contrastive == b.trace[i].contrastive &&
                 a.trace[i].photometric == b.trace[i].photometric && a.trace[i].smoothness == b.trace[i].smoothness;

  const fs::path root = fs::temp_directory_path() / "bacon_acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> dirs;
  for (const char* name : {"a", "b"}) {
    auto d = cfg.dataset;
    d.path = (root / name).string();
    experiment::write_generated(experiment::generate_frames(d, cfg.arch), d, config::config_hash(cfg), false);
    dirs.push_back(d.path);
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  long files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file()) continue;
    const fs::path other = dirs[1] / fs::relative(e.path(), dirs[0]);
    ++files;
    differing += !fs::exists(other) || slurp(e.path()) != slurp(other);
  }
  long other_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dirs[1])) other_files += e.is_regular_file();
  fs::remove_all(root);
  Verdict v;
  v.pass = same_trace && differing == 0 && files == other_files && files > 0;
  v.detail = fmt("50-step loss trace %s; %ld/%ld dataset files differ", same_trace ? "identical" : "differs",
                 differing, files);
  return v;
}

// -------------------------------------------------------------- training runs

struct Desk {
  int frames = 200;
  long steps = 5000;
  int seeds = 3;
  int crop_height = 32;
  int crop_width = 128;
  int batch = 1;
  double lr = 1e-3;
  std::optional<fs::path> out;
};

struct RunResult {
  double occ = 0, all = 0;  // >3 px outlier rates, percent
  double teacher_mean = 0;  // px, held-out frames
  double occ_supervised = 0;
};

class Runs {
 public:
  Runs(const Desk& desk, std::span<const scenegen::MultiBaselineFrame> train,
       std::span<const scenegen::MultiBaselineFrame> eval)
      : desk_(desk), train_(train), eval_(eval) {}

  const RunResult& get(const std::string& row, int seed) {
    const auto key = std::pair{row, seed};
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    auto cfg = config::default_config();
    cfg.ablation = config::ablation_for(row);
    cfg.dataset.n_frames = desk_.frames;
    cfg.training.steps = desk_.steps;
    cfg.training.lr.total_steps = desk_.steps;
    cfg.training.seed = static_cast<std::uint64_t>(seed);
    cfg.training.crop_height = desk_.crop_height;
    cfg.training.crop_width = desk_.crop_width;
    cfg.training.batch = desk_.batch;
    cfg.training.lr.lr_max = desk_.lr;
    experiment::TrainOptions o;
    if (desk_.out) o.out_dir = *desk_.out / fmt("%s_seed%d", row == "E*" ? "Estar" : row.c_str(), seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = experiment::run_training(cfg, train_, eval_, o);
    RunResult r;
    r.occ = evalkit::row(out.report->rows, evalkit::Region::occ).outlier_rate;
    r.all = evalkit::row(out.report->rows, evalkit::Region::all).outlier_rate;
    r.teacher_mean = experiment::mean_teacher_disparity(out.state.teacher, eval_, static_cast<int>(eval_.size()));
    r.occ_supervised = static_cast<double>(out.supervised_occluded) /
                       static_cast<double>(std::max<std::size_t>(1, out.gt_student_occluded));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << fmt("  run %-12s seed %d: OCC %.2f%% ALL %.2f%% teacher mean %.2f px, occluded supervised %.3f "
                     "(%.0f s)\n",
                     row.c_str(), seed, r.occ, r.all, r.teacher_mean, r.occ_supervised, secs);
    return cache_.emplace(key, r).first->second;
  }

  int seeds() const { return desk_.seeds; }
  double d_max() const { return config::default_config().arch.d_max; }

 private:
  Desk desk_;
  std::span<const scenegen::MultiBaselineFrame> train_, eval_;
  std::map<std::pair<std::string, int>, RunResult> cache_;
};

Verdict loss_term_direction(Runs& runs) {
  bool every = true;
  double rel = 0;
  std::ostringstream os;
  for (int s = 1; s <= runs.seeds(); ++s) {
    const double e = runs.get("E", s).occ, a = runs.get("A", s).occ;
    every = every && e < a;
    rel += (a - e) / a;
    os << fmt("seed %d E %.2f vs A %.2f; ", s, e, a);
  }
  rel /= runs.seeds();
  os << fmt("mean relative OCC reduction %.1f%% (need >= 25%%, lower on every seed)", 100 * rel);
  return {every && rel >= 0.25, os.str()};
}

Verdict attention_direction(Runs& runs) {
  double aware = 0, uniform = 0;
  for (int s = 1; s <= runs.seeds(); ++s) {
    aware += runs.get("E", s).occ;
    uniform += runs.get("T5-thr-auto", s).occ;
  }
  aware /= runs.seeds();
  uniform /= runs.seeds();
  return {aware < uniform, fmt("mean OCC outliers: occlusion-aware %.2f%% vs uniform %.2f%%", aware, uniform)};
}

Verdict momentum_teacher(Runs& runs) {
  double ema = 0, fixed = 0;
  for (int s = 1; s <= runs.seeds(); ++s) {
    ema += runs.get("E", s).all;
    fixed += runs.get("E*", s).all;
  }
  ema /= runs.seeds();
  fixed /= runs.seeds();
  return {ema < fixed, fmt("mean ALL outliers: momentum teacher %.2f%% vs fixed teacher %.2f%%", ema, fixed)};
}

Verdict no_collapse(Runs& runs, const Verdict& zero) {
  double lowest = 1e300;
  for (int s = 1; s <= runs.seeds(); ++s) lowest = std::min(lowest, runs.get("E", s).teacher_mean);
  const double bound = 0.05 * runs.d_max();
  return {zero.pass && lowest > bound,
          fmt("lowest mean teacher disparity over seeds %.2f px (need > %.2f); ", lowest, bound) + zero.detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BaCon acceptance checks"};
  std::vector<int> selected;
  bool fast = false, training = false;
  Desk desk;
  std::string out;
  app.add_option("--criteria", selected, "criteria to run (default: all)")->check(CLI::Range(1, 11));
  app.add_flag("--fast", fast, "criteria that need no training: 1-5, 9, 11 and the zero-network half of 10");
  app.add_flag("--training", training, "training criteria only: 6, 7, 8 and 10");
  app.add_option("--frames", desk.frames, "training frames")->capture_default_str();
  app.add_option("--steps", desk.steps, "training steps per run")->capture_default_str();
  app.add_option("--seeds", desk.seeds, "seeds per configuration")->capture_default_str();
  app.add_option("--crop-height", desk.crop_height)->capture_default_str();
  app.add_option("--crop-width", desk.crop_width)->capture_default_str();
  app.add_option("--batch", desk.batch)->capture_default_str();
  app.add_option("--lr", desk.lr, "peak learning rate")->capture_default_str();
  app.add_option("--out", out, "write every training run (checkpoints, reports, loss traces) here");
  CLI11_PARSE(app, argc, argv);
  if (!out.empty()) desk.out = out;

  std::set<int> want;
  if (!selected.empty())
    want.insert(selected.begin(), selected.end());
  else if (fast)
    want = {1, 2, 3, 4, 5, 9, 10, 11};
  else if (training)
    want = {6, 7, 8, 10};
  else
    for (int i = 1; i <= 11; ++i) want.insert(i);
  const bool zero_only = fast && selected.empty();

  log::set_level(log::Level::warning);
  experiment::tune_allocator();
  int failed = 0;
  auto report = [&](int id, const Verdict& v) {
    std::cout << fmt("criterion %2d: %s  ", id, v.pass ? "PASS" : "FAIL") << v.detail << std::endl;
    failed += !v.pass;
  };
  try {
    const int n_standard = std::max(desk.frames, 20);
    const bool need_training = want.count(6) || want.count(7) || want.count(8) || (want.count(10) && !zero_only);
    const bool need_standard = want.count(4) || want.count(5) || want.count(10) || need_training;
    std::vector<scenegen::MultiBaselineFrame> standard;
    if (need_standard) standard = standard_frames(need_training ? n_standard : 20);
    const std::span<const scenegen::MultiBaselineFrame> first20(standard.data(), std::min<std::size_t>(20, standard.size()));

    if (want.count(1)) report(1, loss_identities());
    if (want.count(2)) report(2, attention_truth_table());
    if (want.count(3)) report(3, gradient_oracle());
    if (want.count(4)) report(4, stop_gradient_and_ema(first20));
    if (want.count(5)) report(5, geometry_oracle(first20));

    std::vector<scenegen::MultiBaselineFrame> eval;
    std::optional<Runs> runs;
    if (need_training) {
      const auto c = config::default_config();
      eval = experiment::generate_frames(c.eval_dataset, c.arch);
      runs.emplace(desk, standard, eval);
      std::cerr << fmt("desk profile: %d frames, %ld steps, %d seeds, crop %dx%d, batch %d, peak lr %g\n",
                       desk.frames, desk.steps, desk.seeds, desk.crop_height, desk.crop_width, desk.batch, desk.lr);
    }
    if (want.count(6)) report(6, loss_term_direction(*runs));
    if (want.count(7)) report(7, attention_direction(*runs));
    if (want.count(8)) report(8, momentum_teacher(*runs));
    if (want.count(9)) report(9, metric_suite());
    if (want.count(10)) {
      const auto zero = zero_network(standard);
      report(10, zero_only ? zero : no_collapse(*runs, zero));
    }
    if (want.count(11)) report(11, determinism());
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (failed ? fmt("%d criteria failed", failed) : std::string("all selected criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
