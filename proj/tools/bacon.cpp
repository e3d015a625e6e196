// bacon: dataset generation, training, evaluation, plotting and ablations,
// all driven by one JSON config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bacon/config.hpp"
#include "bacon/dataset.hpp"
#include "bacon/evalkit.hpp"
#include "bacon/experiment.hpp"
#include "bacon/log.hpp"
#include "bacon/plot.hpp"

namespace fs = std::filesystem;
using namespace bacon;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

config::RunConfig load(const Common& c) {
  return c.config.empty() ? config::default_config() : config::load_config(c.config);
}

std::vector<scenegen::MultiBaselineFrame> read_frames(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw Error(std::string(what) + " dataset " + path + " does not exist (run `bacon gen`)");
  return dataset::read_dataset(path);
}

void print_rows(const evalkit::Report& r) {
  for (const auto& row : r.rows) {
    if (!row.present) {
      std::printf("%-4s (no pixels)\n", evalkit::to_string(row.region).c_str());
      continue;
    }
    std::printf("%-4s EPE %8.4f  >%gpx %7.3f%%  D1 %7.3f%%  n=%zu\n", evalkit::to_string(row.region).c_str(), row.epe,
                row.k, row.outlier_rate, row.d1, row.n_pixels);
  }
}

int cmd_gen(const Common& c, bool eval_split) {
  auto cfg = load(c);
  auto& d = eval_split ? cfg.eval_dataset : cfg.dataset;
  if (c.seed) d.seed = *c.seed;
  if (!c.out.empty()) d.path = c.out;
  config::validate(cfg);
  const auto frames = experiment::generate_frames(d, cfg.arch);
  experiment::write_generated(frames, d, config::config_hash(cfg), c.force);
  std::cout << "wrote " << d.path << "\n" << experiment::dataset_summary(frames);
  return 0;
}

int cmd_train(const Common& c) {
  auto cfg = load(c);
  if (c.seed) cfg.training.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  config::validate(cfg);
  const fs::path out = cfg.out_dir;
  if (fs::exists(out) && !fs::is_empty(out) && !c.force)
    throw Error("refusing to overwrite non-empty directory " + out.string() + " (use --force)");
  const auto train = read_frames(cfg.dataset.path, "training");
  std::vector<scenegen::MultiBaselineFrame> eval;
  if (fs::exists(cfg.eval_dataset.path))
    eval = dataset::read_dataset(cfg.eval_dataset.path);
  else
    log::warning("evaluation dataset " + cfg.eval_dataset.path + " missing; skipping final evaluation");
  experiment::TrainOptions opt;
  opt.out_dir = out;
  opt.verbose = true;
  const auto res = experiment::run_training(cfg, train, eval, opt);
  std::cout << "config " << res.config_hash << ", " << res.state.step << " steps, checkpoint "
            << (out / "checkpoint.json").string() << "\n";
  if (res.report) print_rows(*res.report);
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data, const std::string& oracle) {
  auto cfg = load(c);
  if (!data.empty()) cfg.eval_dataset.path = data;
  const auto frames = read_frames(cfg.eval_dataset.path, "evaluation");
  const fs::path out = c.out.empty() ? fs::path(cfg.out_dir) / "eval" : fs::path(c.out);
  evalkit::EvalOptions eo;
  eo.error_map_dir = out / "errors";
  evalkit::Report report;
  if (!oracle.empty()) {
    eo.config_hash = config::config_hash(cfg);
    eo.checkpoint_id = "oracle:" + oracle;
    report = evalkit::evaluate(oracle == "perfect" ? evalkit::perfect_predictor() : evalkit::zero_predictor(), frames,
                               eo);
  } else {
    if (checkpoint.empty()) throw InvalidArgument("eval needs --checkpoint or --oracle");
    const auto ck = distill::load_checkpoint(checkpoint);
    eo.config_hash = config::config_hash(config::config_from_json(ck.config));
    eo.checkpoint_id = ck.id;
    report = evalkit::evaluate_checkpoint(ck, frames, eo);
  }
  evalkit::write_report(report, out);
  print_rows(report);
  std::cout << "report " << (out / "report.json").string() << "\n";
  return 0;
}

int cmd_plot(const Common& c, const std::vector<std::string>& reports, const std::vector<std::string>& logs) {
  const fs::path out = c.out.empty() ? fs::path("plots") : fs::path(c.out);
  std::vector<fs::path> rp(reports.begin(), reports.end()), lp(logs.begin(), logs.end());
  const auto res = plot::plot_reports(rp, lp, out);
  for (const auto& n : res.notices) log::info(n);
  for (const auto& f : res.files) std::cout << f.string() << "\n";
  return 0;
}

int cmd_ablate(const Common& c, std::vector<std::string> rows) {
  auto base = load(c);
  if (c.seed) base.training.seed = *c.seed;
  if (!c.out.empty()) base.out_dir = c.out;
  if (rows.empty()) {
    rows = config::loss_table_rows();
    for (const auto& r : config::mask_table_rows()) rows.push_back(r);
  }
  const fs::path out = base.out_dir;
  if (fs::exists(out) && !fs::is_empty(out) && !c.force)
    throw Error("refusing to overwrite non-empty directory " + out.string() + " (use --force)");
  const auto train = read_frames(base.dataset.path, "training");
  const auto eval = read_frames(base.eval_dataset.path, "evaluation");
  std::vector<experiment::AblationEntry> entries;
  for (const auto& row : rows) {
    auto cfg = base;
    cfg.ablation = config::ablation_for(row);
    cfg.out_dir = (out / row).string();
    config::validate(cfg);
    log::info("ablation row " + row);
    experiment::TrainOptions opt;
    opt.out_dir = cfg.out_dir;
    auto res = experiment::run_training(cfg, train, eval, opt);
    std::cout << "row " << row << "\n";
    print_rows(*res.report);
    entries.push_back({row, std::move(*res.report)});
  }
  std::ofstream(out / "comparison.json") << experiment::comparison_json(entries).dump(2) << "\n";
  std::ofstream(out / "comparison.csv") << experiment::comparison_csv(entries);
  std::cout << "comparison " << (out / "comparison.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-baseline contrastive self-supervised stereo"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "override the seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_flag("--force", common.force, "overwrite a non-empty output directory");
  };

  auto* gen = app.add_subcommand("gen", "render a procedural multi-baseline dataset");
  add_common(gen);
  bool eval_split = false;
  gen->add_flag("--eval", eval_split, "generate the evaluation dataset instead of the training one");

  auto* train = app.add_subcommand("train", "train student and teacher, then evaluate the inference network");
  add_common(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or an oracle on the evaluation dataset");
  add_common(eval);
  std::string checkpoint, data, oracle;
  eval->add_option("--checkpoint", checkpoint, "checkpoint JSON")->check(CLI::ExistingFile);
  eval->add_option("--dataset", data, "dataset directory (default: config eval_dataset.path)");
  eval->add_option("--oracle", oracle, "evaluate a reference predictor instead")
      ->check(CLI::IsMember({"perfect", "zero"}));

  auto* plt = app.add_subcommand("plot", "render outlier bars, loss curves and error heatmaps");
  add_common(plt);
  std::vector<std::string> reports, logs;
  plt->add_option("reports", reports, "report.json files")->required();
  plt->add_option("--loss", logs, "loss.csv files");

  auto* abl = app.add_subcommand("ablate", "train every ablation row and write a comparison report");
  add_common(abl);
  std::vector<std::string> rows;
  abl->add_option("--rows", rows, "rows to run (default: all)")->check(CLI::IsMember(config::ablation_rows()));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(common, eval_split);
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, checkpoint, data, oracle);
    if (*plt) return cmd_plot(common, reports, logs);
    if (*abl) return cmd_ablate(common, rows);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
