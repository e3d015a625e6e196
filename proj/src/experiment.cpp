#include "bacon/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "bacon/dataset.hpp"
#include "bacon/log.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace bacon::experiment {

namespace fs = std::filesystem;

void tune_allocator() {
#if defined(__GLIBC__)
  // Training allocates many multi-megabyte buffers per step; keeping them on the
  // heap instead of fresh mmap pages removes most page-fault time.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

std::vector<scenegen::MultiBaselineFrame> generate_frames(const config::DatasetConfig& d,
                                                          const stereonet::ArchConfig& arch) {
  const auto rig = config::rig_for(d, arch);
  std::vector<scenegen::MultiBaselineFrame> frames;
  frames.reserve(static_cast<std::size_t>(d.n_frames));
  for (int i = 0; i < d.n_frames; ++i) {
    const auto u = static_cast<std::uint64_t>(i);
    const auto spec = scenegen::sample_scene(d.ranges, d.geometry, rig, derive_seed(d.seed, {u, 0}));
    auto frame = scenegen::render_frame(spec, rig, derive_seed(d.seed, {u, 1}));
    char id[32];
    std::snprintf(id, sizeof id, "frame_%05d", i);
    frame.id = id;
    for (auto& view : frame.views)
      for (auto& v : view.values()) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    frames.push_back(std::move(frame));
  }
  return frames;
}

void write_generated(const std::vector<scenegen::MultiBaselineFrame>& frames, const config::DatasetConfig& d,
                     const std::string& config_hash, bool force) {
  const fs::path root = d.path;
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force) throw Error("refusing to overwrite non-empty directory " + root.string() + " (use --force)");
    fs::remove_all(root);
  }
  dataset::write_dataset(frames, root, {{"config_hash", config_hash}, {"seed", d.seed}});
}

std::string dataset_summary(const std::vector<scenegen::MultiBaselineFrame>& frames) {
  std::map<int, std::size_t> hist;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& f : frames) {
    if (f.n_views() < 2) continue;
    for (double v : f.gt_disparity(0, 1).values()) {
      hist[static_cast<int>(std::floor(v / 2.0)) * 2]++;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::ostringstream os;
  os << "frames: " << frames.size() << "\n";
  if (hist.empty()) return os.str();
  os << "adjacent-pair disparity range: [" << lo << ", " << hi << "] px\n";
  std::size_t total = 0;
  for (const auto& [_, n] : hist) total += n;
  for (const auto& [bin, n] : hist) {
    const double pct = 100.0 * static_cast<double>(n) / static_cast<double>(total);
    os << "  [" << std::setw(3) << bin << ", " << std::setw(3) << bin + 2 << ") " << std::setw(6) << std::fixed
       << std::setprecision(2) << pct << "% " << std::string(static_cast<std::size_t>(pct / 2), '#') << "\n";
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

std::string loss_csv_header() { return "step,L_c,L_p,L_s,total,m,LR"; }

std::string loss_csv_line(const LossRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.step << ',' << r.contrastive << ',' << r.photometric << ',' << r.smoothness << ','
     << r.total << ',' << r.momentum << ',' << r.lr;
  return os.str();
}

std::vector<LossRecord> read_loss_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open loss log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != loss_csv_header()) throw Error("loss log " + path.string() + " has an unexpected header");
  std::vector<LossRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRecord r;
    char comma;
    std::istringstream is(line);
    if (!(is >> r.step >> comma >> r.contrastive >> comma >> r.photometric >> comma >> r.smoothness >> comma >>
          r.total >> comma >> r.momentum >> comma >> r.lr))
      throw Error("loss log " + path.string() + " has a malformed line: " + line);
    out.push_back(r);
  }
  return out;
}

double mean_teacher_disparity(const stereonet::ParamSet& teacher, std::span<const scenegen::MultiBaselineFrame> frames,
                              int max_frames) {
  const std::size_t n = std::min(frames.size(), static_cast<std::size_t>(std::max(max_frames, 0)));
  if (n == 0) throw InvalidArgument("collapse monitor needs held-out frames");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = frames[i];
    const auto d = distill::teacher_predict(teacher, f.views[0], f.views[1], f.target_on_left(0, 1));
    for (double v : d.values()) sum += v;
    count += d.size();
  }
  return sum / static_cast<double>(count);
}

TrainOutcome run_training(const config::RunConfig& cfg, std::span<const scenegen::MultiBaselineFrame> train,
                          std::span<const scenegen::MultiBaselineFrame> eval, const TrainOptions& opt) {
  config::validate(cfg);
  tune_allocator();
  const distill::TrainConfig tc = config::effective_training(cfg);
  TrainOutcome out;
  out.config_hash = config::config_hash(cfg);
  out.state = distill::init_state(cfg.arch, derive_seed(tc.seed, {0x1417}));

  std::ofstream csv;
  if (opt.out_dir) {
    fs::create_directories(*opt.out_dir);
    std::ofstream(*opt.out_dir / "config.json") << config::to_json(cfg).dump(2) << "\n";
    csv.open(*opt.out_dir / "loss.csv");
    if (!csv) throw Error("cannot write " + (*opt.out_dir / "loss.csv").string());
    csv << loss_csv_header() << "\n";
  }
  auto checkpoint = [&](const fs::path& path) {
    distill::Checkpoint ck{out.state.student, out.state.teacher, out.state.adam, out.state.step,
                           config::to_json(cfg), out.config_hash + "@" + std::to_string(out.state.step)};
    distill::save_checkpoint(ck, path);
  };

  const long monitor_start = static_cast<long>(std::ceil(0.2 * static_cast<double>(tc.steps)));
  const long monitor_every = std::max(1L, tc.steps / 10);
  const double collapse_floor = 0.05 * cfg.arch.d_max;
  for (long s = 0; s < tc.steps; ++s) {
    distill::StepResult r = [&] {
      try {
        return distill::train_step(out.state, train, tc);
      } catch (const TrainingDiverged&) {
        throw;
      } catch (const Error& e) {
        throw Error("training step " + std::to_string(s) + ": " + e.what());
      }
    }();
    out.state = std::move(r.state);
    LossRecord rec{s, r.report.contrastive, r.report.photometric, r.report.smoothness, r.report.total, r.momentum,
                   r.lr};
    out.trace.push_back(rec);
    for (const auto& d : r.samples) {
      out.gt_student_occluded += d.gt_student_occluded;
      out.supervised_occluded += d.supervised_occluded;
    }
    if (csv.is_open() && (s % cfg.log_every == 0 || s + 1 == tc.steps)) csv << loss_csv_line(rec) << "\n";
    if (opt.verbose && (s % std::max(1L, tc.steps / 20) == 0 || s + 1 == tc.steps))
      log::info("step " + std::to_string(s) + " total " + std::to_string(rec.total) + " L_c " +
                std::to_string(rec.contrastive) + " L_p " + std::to_string(rec.photometric));
    const long done = s + 1;
    if (!eval.empty() && opt.monitor_frames > 0 && done >= monitor_start &&
        (done % monitor_every == 0 || done == tc.steps)) {
      const double m = mean_teacher_disparity(out.state.teacher, eval, opt.monitor_frames);
      out.monitor.emplace_back(done, m);
      if (m <= collapse_floor) {
        out.collapse_warning = true;
        log::warning("collapse monitor: mean teacher disparity " + std::to_string(m) + " px at step " +
                     std::to_string(done) + " (floor " + std::to_string(collapse_floor) + ")");
      }
    }
    if (opt.out_dir && done % cfg.checkpoint_every == 0 && done != tc.steps) {
      char name[40];
      std::snprintf(name, sizeof name, "step_%07ld.json", done);
      checkpoint(*opt.out_dir / "checkpoints" / name);
    }
  }
  if (opt.out_dir) checkpoint(*opt.out_dir / "checkpoint.json");

  if (opt.evaluate && !eval.empty()) {
    evalkit::EvalOptions eo;
    eo.config_hash = out.config_hash;
    eo.checkpoint_id = out.config_hash + "@" + std::to_string(out.state.step);
    if (opt.out_dir) eo.error_map_dir = *opt.out_dir / "eval" / "errors";
    const auto& net = cfg.ablation.ema ? out.state.teacher : out.state.student;
    out.report = evalkit::evaluate(evalkit::network_predictor(net), eval, eo);
    if (opt.out_dir) evalkit::write_report(*out.report, *opt.out_dir / "eval");
  }
  return out;
}

nlohmann::json comparison_json(const std::vector<AblationEntry>& entries) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json r = evalkit::to_json(e.report);
    r.erase("per_frame");
    r["row"] = e.row;
    rows.push_back(r);
  }
  return {{"schema", "bacon-comparison/1"}, {"entries", rows}};
}

std::string comparison_csv(const std::vector<AblationEntry>& entries) {
  std::ostringstream os;
  os << std::setprecision(17) << "row,config_hash,region,epe,outlier_rate,k,d1,n_pixels\n";
  for (const auto& e : entries)
    for (const auto& row : e.report.rows) {
      os << e.row << ',' << e.report.config_hash << ',' << evalkit::to_string(row.region) << ',';
      if (row.present)
        os << row.epe << ',' << row.outlier_rate << ',' << row.k << ',' << row.d1;
      else
        os << ",," << row.k << ',';
      os << ',' << row.n_pixels << '\n';
    }
  return os.str();
}

}  // namespace bacon::experiment
