#include "bacon/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace bacon::config {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw InvalidArgument("config section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.contains(key)) throw InvalidArgument("unknown config key '" + section + "." + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

json dataset_json(const DatasetConfig& d) {
  const auto& r = d.ranges;
  return {{"path", d.path},
          {"n_frames", d.n_frames},
          {"seed", d.seed},
          {"n_views", d.n_views},
          {"baseline_step", d.baseline_step},
          {"geometry", {{"focal", d.geometry.focal}, {"width", d.geometry.width}, {"height", d.geometry.height}}},
          {"ranges",
           {{"depth_min", r.depth_min},
            {"depth_max", r.depth_max},
            {"min_layers", r.min_layers},
            {"max_layers", r.max_layers},
            {"min_layer_width", r.min_layer_width},
            {"max_layer_width", r.max_layer_width},
            {"min_layer_height", r.min_layer_height},
            {"max_layer_height", r.max_layer_height}}}};
}

DatasetConfig dataset_from(const json& j, DatasetConfig d, const std::string& section) {
  check_keys(j, {"path", "n_frames", "seed", "n_views", "baseline_step", "geometry", "ranges"}, section);
  read(j, "path", d.path);
  read(j, "n_frames", d.n_frames);
  read(j, "seed", d.seed);
  read(j, "n_views", d.n_views);
  read(j, "baseline_step", d.baseline_step);
  if (j.contains("geometry")) {
    const json& g = j.at("geometry");
    check_keys(g, {"focal", "width", "height"}, section + ".geometry");
    read(g, "focal", d.geometry.focal);
    read(g, "width", d.geometry.width);
    read(g, "height", d.geometry.height);
  }
  if (j.contains("ranges")) {
    const json& r = j.at("ranges");
    check_keys(r,
               {"depth_min", "depth_max", "min_layers", "max_layers", "min_layer_width", "max_layer_width",
                "min_layer_height", "max_layer_height"},
               section + ".ranges");
    read(r, "depth_min", d.ranges.depth_min);
    read(r, "depth_max", d.ranges.depth_max);
    read(r, "min_layers", d.ranges.min_layers);
    read(r, "max_layers", d.ranges.max_layers);
    read(r, "min_layer_width", d.ranges.min_layer_width);
    read(r, "max_layer_width", d.ranges.max_layer_width);
    read(r, "min_layer_height", d.ranges.min_layer_height);
    read(r, "max_layer_height", d.ranges.max_layer_height);
  }
  return d;
}

json ablation_json(const Ablation& a) {
  return {{"row", a.row},
          {"loss_terms", {{"contrastive", a.contrastive}, {"photometric", a.photometric}, {"smoothness", a.smoothness}}},
          {"ema", a.ema},
          {"masks",
           {{"threshold", a.threshold_mask}, {"auto_mask", a.auto_mask}, {"occlusion_aware", a.occlusion_aware}}}};
}

Ablation ablation_from(const json& j) {
  check_keys(j, {"row", "loss_terms", "ema", "masks"}, "ablation");
  // A named row supplies the defaults; explicit flags override it.
  Ablation a = j.contains("row") ? ablation_for(j.at("row").get<std::string>()) : Ablation{};
  if (j.contains("loss_terms")) {
    const json& t = j.at("loss_terms");
    check_keys(t, {"contrastive", "photometric", "smoothness"}, "ablation.loss_terms");
    read(t, "contrastive", a.contrastive);
    read(t, "photometric", a.photometric);
    read(t, "smoothness", a.smoothness);
  }
  read(j, "ema", a.ema);
  if (j.contains("masks")) {
    const json& m = j.at("masks");
    check_keys(m, {"threshold", "auto_mask", "occlusion_aware"}, "ablation.masks");
    read(m, "threshold", a.threshold_mask);
    read(m, "auto_mask", a.auto_mask);
    read(m, "occlusion_aware", a.occlusion_aware);
  }
  return a;
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  c.eval_dataset.path = "data/eval";
  c.eval_dataset.n_frames = 20;
  c.eval_dataset.seed = 1000003;
  return c;
}

json to_json(const RunConfig& c) {
  const auto& t = c.training;
  return {{"dataset", dataset_json(c.dataset)},
          {"eval_dataset", dataset_json(c.eval_dataset)},
          {"training",
           {{"steps", t.steps},
            {"batch", t.batch},
            {"crop_height", t.crop_height},
            {"crop_width", t.crop_width},
            {"seed", t.seed},
            {"lr_max", t.lr.lr_max},
            {"pct_start", t.lr.pct_start},
            {"div_factor", t.lr.div_factor},
            {"final_div_factor", t.lr.final_div_factor},
            {"adam_beta1", t.adam.beta1},
            {"adam_beta2", t.adam.beta2},
            {"adam_eps", t.adam.eps},
            {"augment_enabled", t.augment_enabled},
            {"augment", distill::to_json(t.augment)}}},
          {"loss",
           {{"alpha", t.loss.alpha},
            {"tau", t.loss.tau},
            {"lambda_p", t.loss.lambda_p},
            {"lambda_s", t.loss.lambda_s},
            {"ssim_window", t.loss.ssim_window},
            {"ssim_c1", t.loss.ssim_c1},
            {"ssim_c2", t.loss.ssim_c2},
            {"photometric_masked_mean", t.policy.photometric_masked_mean}}},
          {"schedule", {{"m_base", t.m_base}}},
          {"arch", stereonet::to_json(c.arch)},
          {"ablation", ablation_json(c.ablation)},
          {"checkpoint_every", c.checkpoint_every},
          {"log_every", c.log_every},
          {"out_dir", c.out_dir}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c = default_config();
  check_keys(j,
             {"dataset", "eval_dataset", "training", "loss", "schedule", "arch", "ablation", "checkpoint_every",
              "log_every", "out_dir"},
             "config");
  if (j.contains("dataset")) c.dataset = dataset_from(j.at("dataset"), c.dataset, "dataset");
  if (j.contains("eval_dataset")) c.eval_dataset = dataset_from(j.at("eval_dataset"), c.eval_dataset, "eval_dataset");
  auto& t = c.training;
  if (j.contains("training")) {
    const json& s = j.at("training");
    check_keys(s,
               {"steps", "batch", "crop_height", "crop_width", "seed", "lr_max", "pct_start", "div_factor",
                "final_div_factor", "adam_beta1", "adam_beta2", "adam_eps", "augment_enabled", "augment"},
               "training");
    read(s, "steps", t.steps);
    read(s, "batch", t.batch);
    read(s, "crop_height", t.crop_height);
    read(s, "crop_width", t.crop_width);
    read(s, "seed", t.seed);
    read(s, "lr_max", t.lr.lr_max);
    read(s, "pct_start", t.lr.pct_start);
    read(s, "div_factor", t.lr.div_factor);
    read(s, "final_div_factor", t.lr.final_div_factor);
    read(s, "adam_beta1", t.adam.beta1);
    read(s, "adam_beta2", t.adam.beta2);
    read(s, "adam_eps", t.adam.eps);
    read(s, "augment_enabled", t.augment_enabled);
    if (s.contains("augment")) t.augment = distill::augment_from_json(s.at("augment"));
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, {"alpha", "tau", "lambda_p", "lambda_s", "ssim_window", "ssim_c1", "ssim_c2",
                   "photometric_masked_mean"},
               "loss");
    read(l, "alpha", t.loss.alpha);
    read(l, "tau", t.loss.tau);
    read(l, "lambda_p", t.loss.lambda_p);
    // λ_s follows 0.001·λ_p unless given explicitly.
    t.loss.lambda_s = l.contains("lambda_s") ? l.at("lambda_s").get<double>() : 0.001 * t.loss.lambda_p;
    read(l, "ssim_window", t.loss.ssim_window);
    read(l, "ssim_c1", t.loss.ssim_c1);
    read(l, "ssim_c2", t.loss.ssim_c2);
    read(l, "photometric_masked_mean", t.policy.photometric_masked_mean);
  }
  if (j.contains("schedule")) {
    check_keys(j.at("schedule"), {"m_base"}, "schedule");
    read(j.at("schedule"), "m_base", t.m_base);
  }
  if (j.contains("arch")) {
    check_keys(j.at("arch"),
               {"d_max", "feature_channels", "hidden_channels", "encoder_layers", "temperature", "init_cost_scale",
                "max_input_height", "max_input_width", "dilations"},
               "arch");
    c.arch = stereonet::arch_from_json(j.at("arch"));
  }
  if (j.contains("ablation")) c.ablation = ablation_from(j.at("ablation"));
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "log_every", c.log_every);
  read(j, "out_dir", c.out_dir);
  t.lr.total_steps = t.steps;
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
}

void validate(const RunConfig& c) {
  c.arch.validate();
  effective_training(c).validate();
  for (const auto* d : {&c.dataset, &c.eval_dataset}) {
    if (d->n_frames < 1) throw InvalidArgument("dataset needs at least one frame");
    if (d->n_views < 3) throw InvalidArgument("the rig needs at least three views");
  }
  if (c.checkpoint_every < 1 || c.log_every < 1) throw InvalidArgument("intervals must be positive");
  if (c.arch.d_max >= c.training.crop_width) throw InvalidArgument("d_max must be smaller than the crop width");
}

std::string hash_json(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& c) { return hash_json(to_json(c)); }

std::vector<std::string> loss_table_rows() { return {"A", "B", "C", "D", "E", "E*"}; }
std::vector<std::string> mask_table_rows() { return {"T5-none", "T5-thr", "T5-auto", "T5-thr-auto", "T5-full"}; }

std::vector<std::string> ablation_rows() {
  auto rows = loss_table_rows();
  for (auto& r : mask_table_rows()) rows.push_back(r);
  return rows;
}

Ablation ablation_for(const std::string& row) {
  Ablation a;
  a.row = row;
  auto terms = [&](bool c, bool p, bool s) {
    a.contrastive = c;
    a.photometric = p;
    a.smoothness = s;
  };
  auto masks = [&](bool thr, bool am, bool occ) {
    a.threshold_mask = thr;
    a.auto_mask = am;
    a.occlusion_aware = occ;
  };
  if (row == "A") terms(false, true, true);
  else if (row == "B") terms(true, false, false);
  else if (row == "C") terms(true, true, false);
  else if (row == "D") terms(true, false, true);
  else if (row == "E") terms(true, true, true);
  else if (row == "E*") a.ema = false;
  else if (row == "T5-none") masks(false, false, false);
  else if (row == "T5-thr") masks(true, false, false);
  else if (row == "T5-auto") masks(false, true, false);
  else if (row == "T5-thr-auto") masks(true, true, false);
  else if (row == "T5-full") masks(true, true, true);
  else throw InvalidArgument("unknown ablation row '" + row + "'");
  return a;
}

losses::LossPolicy policy_for(const Ablation& a) {
  losses::LossPolicy p;
  p.use_contrastive = a.contrastive;
  p.use_photometric = a.photometric;
  p.use_smoothness = a.smoothness;
  p.threshold_mask = a.threshold_mask;
  p.auto_mask = a.auto_mask;
  p.occlusion_aware = a.occlusion_aware;
  return p;
}

distill::TrainConfig effective_training(const RunConfig& c) {
  distill::TrainConfig t = c.training;
  const bool masked_mean = t.policy.photometric_masked_mean;
  t.policy = policy_for(c.ablation);
  t.policy.photometric_masked_mean = masked_mean;
  t.ema = c.ablation.ema;
  t.lr.total_steps = t.steps;
  return t;
}

scenegen::RigConfig rig_for(const DatasetConfig& d, const stereonet::ArchConfig& arch) {
  scenegen::RigConfig rig;
  rig.n_views = d.n_views;
  rig.baseline_step = d.baseline_step;
  rig.d_max = arch.d_max;
  return rig;
}

}  // namespace bacon::config
