#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "bacon/config.hpp"
#include "bacon/dataset.hpp"
#include "bacon/evalkit.hpp"
#include "bacon/plot.hpp"
#include "support.hpp"

using namespace bacon;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(BACON_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bacon_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, int steps) {
  nlohmann::json j = {{"dataset", {{"path", (dir / "train").string()}, {"n_frames", 3}}},
                      {"eval_dataset", {{"path", (dir / "eval").string()}, {"n_frames", 2}}},
                      {"training", {{"steps", steps}, {"batch", 1}, {"crop_height", 16}, {"crop_width", 96}}},
                      {"arch", {{"encoder_layers", 2}, {"hidden_channels", 4}, {"feature_channels", 4}}},
                      {"checkpoint_every", 2},
                      {"out_dir", (dir / "run").string()}};
  std::ofstream(dir / "config.json") << j.dump(2);
  return dir / "config.json";
}

}  // namespace

TEST_CASE("default config carries the reference hyperparameters") {
  const auto c = config::default_config();
  CHECK(c.training.loss.alpha == 0.85);
  CHECK(c.training.loss.lambda_p == 10.0);
  CHECK(c.training.loss.lambda_s == doctest::Approx(0.01));
  CHECK(c.training.loss.tau == 0.1);
  CHECK(c.training.lr.lr_max == 2e-4);
  CHECK(c.training.m_base == 0.996);
  CHECK(c.dataset.baseline_step == 0.5);
  CHECK(c.dataset.geometry.focal == 480.0);
  CHECK_NOTHROW(config::validate(c));
}

TEST_CASE("config JSON round trip, strict keys and hash") {
  auto c = config::default_config();
  c.training.steps = 123;
  c.ablation = config::ablation_for("T5-thr");
  const auto j = config::to_json(c);
  const auto back = config::config_from_json(j);
  CHECK(config::to_json(back) == j);
  CHECK(config::config_hash(back) == config::config_hash(c));
  c.training.seed = 1;
  CHECK(config::config_hash(back) != config::config_hash(c));

  auto bad = j;
  bad["training"]["stepz"] = 5;
  CHECK_THROWS_WITH_AS(config::config_from_json(bad), doctest::Contains("training.stepz"), InvalidArgument);
  nlohmann::json partial = {{"loss", {{"lambda_p", 4.0}}}};
  CHECK(config::config_from_json(partial).training.loss.lambda_s == doctest::Approx(0.004));
}

TEST_CASE("ablation rows map onto loss terms, EMA and masks") {
  auto c = config::default_config();
  c.ablation = config::ablation_for("A");
  auto t = config::effective_training(c);
  CHECK_FALSE(t.policy.use_contrastive);
  CHECK(t.policy.use_photometric);
  CHECK(t.policy.use_smoothness);
  CHECK(t.ema);
  c.ablation = config::ablation_for("B");
  t = config::effective_training(c);
  CHECK(t.policy.use_contrastive);
  CHECK_FALSE(t.policy.use_photometric);
  c.ablation = config::ablation_for("E*");
  t = config::effective_training(c);
  CHECK_FALSE(t.ema);
  CHECK(t.policy.use_contrastive);
  c.ablation = config::ablation_for("T5-thr-auto");
  t = config::effective_training(c);
  CHECK(t.policy.threshold_mask);
  CHECK(t.policy.auto_mask);
  CHECK_FALSE(t.policy.occlusion_aware);
  CHECK(config::ablation_rows().size() == 11);
  CHECK_THROWS_AS(config::ablation_for("F"), InvalidArgument);
}

TEST_CASE("config validation catches inconsistent settings") {
  auto c = config::default_config();
  c.training.crop_width = 64;  // d_max = 64
  CHECK_THROWS_AS(config::validate(c), InvalidArgument);
  c = config::default_config();
  c.training.loss.tau = -1;
  CHECK_THROWS_AS(config::validate(c), InvalidArgument);
}

TEST_CASE("command line: gen, train, eval, plot and ablate") {
  const fs::path dir = scratch("flow");
  const fs::path cfg = write_config(dir, 4);
  const std::string c = " --config " + cfg.string();
  REQUIRE(run("gen" + c) == 0);
  CHECK(dataset::read_manifest(dir / "train")["n_frames"] == 3);
  CHECK(run("gen" + c) != 0);  // refuses a non-empty directory
  CHECK(run("gen --force" + c) == 0);
  REQUIRE(run("gen --eval" + c) == 0);

  REQUIRE(run("train" + c) == 0);
  CHECK(fs::exists(dir / "run" / "checkpoint.json"));
  CHECK(fs::exists(dir / "run" / "checkpoints" / "step_0000002.json"));
  CHECK(experiment::read_loss_csv(dir / "run" / "loss.csv").size() == 4);
  const auto trained = evalkit::read_report(dir / "run" / "eval" / "report.json");
  CHECK(trained.config_hash == config::config_hash(config::load_config(cfg)));
  CHECK(run("train" + c) != 0);  // run directory exists

  REQUIRE(run("eval" + c + " --checkpoint " + (dir / "run" / "checkpoint.json").string() + " --out " +
              (dir / "ev").string()) == 0);
  CHECK(evalkit::read_report(dir / "ev" / "report.json").rows[2].epe == trained.rows[2].epe);
  REQUIRE(run("eval" + c + " --oracle perfect --out " + (dir / "perfect").string()) == 0);
  for (const auto& r : evalkit::read_report(dir / "perfect" / "report.json").rows) CHECK(r.outlier_rate == 0.0);
  CHECK(run("eval" + c) != 0);  // neither checkpoint nor oracle
  CHECK(run("eval" + c + " --oracle magic") != 0);

  REQUIRE(run("plot " + (dir / "ev" / "report.json").string() + " " + (dir / "perfect" / "report.json").string() +
              " --loss " + (dir / "run" / "loss.csv").string() + " --out " + (dir / "plots").string()) == 0);
  CHECK(fs::exists(dir / "plots" / "outliers.svg"));
  std::ofstream(dir / "broken.json") << "[]";
  CHECK(run("plot " + (dir / "broken.json").string()) != 0);

  REQUIRE(run("ablate" + c + " --rows A --rows 'E*' --out " + (dir / "abl").string()) == 0);
  std::ifstream in(dir / "abl" / "comparison.json");
  const auto comp = nlohmann::json::parse(in);
  REQUIRE(comp["entries"].size() == 2);
  CHECK(comp["entries"][0]["row"] == "A");
  CHECK(comp["entries"][1]["row"] == "E*");
  CHECK(run("bogus") != 0);
  fs::remove_all(dir);
}

TEST_CASE("plots: report order, empty gallery notice, malformed report") {
  const fs::path dir = scratch("plot");
  evalkit::Report a, b;
  a.config_hash = b.config_hash = "h";
  a.checkpoint_id = "a";
  b.checkpoint_id = "b";
  const auto frames = test::standard_frames(1, 1000003);
  a = evalkit::evaluate(evalkit::zero_predictor(), frames, {});
  b = evalkit::evaluate(evalkit::perfect_predictor(), frames, {});
  b.per_frame.clear();
  evalkit::write_report(a, dir / "a");
  evalkit::write_report(b, dir / "b");
  const auto svg = plot::bar_chart_svg({{"zero", a}, {"perfect", b}});
  CHECK(svg.find("zero") < svg.find("perfect"));
  const auto out = plot::plot_reports({dir / "b" / "report.json"}, {}, dir / "out");
  CHECK_FALSE(out.notices.empty());
  std::ofstream(dir / "bad.json") << "{\"schema\": 3}";
  CHECK_THROWS_WITH_AS(plot::plot_reports({dir / "bad.json"}, {}, dir / "out"), doctest::Contains("bad.json"),
                       Error);
  fs::remove_all(dir);
}
