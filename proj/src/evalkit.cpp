#include "bacon/evalkit.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bacon/dataset.hpp"
#include "bacon/imgeom.hpp"

namespace bacon::evalkit {

namespace {

std::size_t check_inputs(const DisparityMap& pred, const DisparityMap& gt, const Mask& valid, const char* what) {
  require_same_shape(pred, gt, what);
  require_same_shape(pred, valid, what);
  const std::size_t n = count_true(valid);
  if (n == 0) throw InvalidArgument(std::string(what) + ": empty valid set");
  return n;
}

bool is_d1(double err, double gt) { return err > 3.0 && err > 0.05 * gt; }

constexpr std::array<Region, 3> kRegions = {Region::occ, Region::noc, Region::all};

}  // namespace

std::string to_string(Region r) {
  switch (r) {
    case Region::occ: return "OCC";
    case Region::noc: return "NOC";
    case Region::all: return "ALL";
  }
  return "ALL";
}

Region region_from_string(const std::string& s) {
  if (s == "OCC") return Region::occ;
  if (s == "NOC") return Region::noc;
  if (s == "ALL") return Region::all;
  throw InvalidArgument("unknown region '" + s + "'");
}

double epe(const DisparityMap& pred, const DisparityMap& gt, const Mask& valid) {
  const std::size_t n = check_inputs(pred, gt, valid, "epe");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (valid[i]) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(n);
}

double outlier_rate(const DisparityMap& pred, const DisparityMap& gt, const Mask& valid, double k) {
  if (!(k > 0)) throw InvalidArgument("outlier threshold must be positive");
  const std::size_t n = check_inputs(pred, gt, valid, "outlier_rate");
  std::size_t bad = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (valid[i] && std::abs(pred[i] - gt[i]) > k) ++bad;
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

double d1_rate(const DisparityMap& pred, const DisparityMap& gt, const Mask& valid) {
  const std::size_t n = check_inputs(pred, gt, valid, "d1_rate");
  std::size_t bad = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    if (!(gt[i] > 0)) throw InvalidArgument("d1_rate: non-positive ground truth on a valid pixel");
    if (is_d1(std::abs(pred[i] - gt[i]), gt[i])) ++bad;
  }
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

Mask valid_pixels(const DisparityMap& gt) {
  Mask m(gt.height(), gt.width(), 0);
  for (std::size_t i = 0; i < gt.size(); ++i) m[i] = std::isfinite(gt[i]) && gt[i] > 0 ? 1 : 0;
  return m;
}

namespace {

std::array<Mask, 3> region_masks(const DisparityMap& gt, const Mask& occ) {
  require_same_shape(gt, occ, "region_split");
  const Mask valid = valid_pixels(gt);
  std::array<Mask, 3> m = {Mask(gt.height(), gt.width(), 0), Mask(gt.height(), gt.width(), 0), valid};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    m[0][i] = valid[i] && occ[i];
    m[1][i] = valid[i] && !occ[i];
  }
  return m;
}

}  // namespace

std::array<std::optional<double>, 3> region_split(const MetricFn& fn, const DisparityMap& pred,
                                                  const DisparityMap& gt, const Mask& occ) {
  const auto masks = region_masks(gt, occ);
  std::array<std::optional<double>, 3> out;
  for (int r = 0; r < 3; ++r)
    if (count_true(masks[r]) > 0) out[r] = fn(pred, gt, masks[r]);
  return out;
}

RegionRows region_rows(const DisparityMap& pred, const DisparityMap& gt, const Mask& occ, double k) {
  Accumulator acc(k);
  acc.add(pred, gt, occ);
  return acc.rows();
}

void Accumulator::add(const DisparityMap& pred, const DisparityMap& gt, const Mask& occ) {
  require_same_shape(pred, gt, "Accumulator::add");
  const auto masks = region_masks(gt, occ);
  for (int r = 0; r < 3; ++r) {
    Sums& s = sums_[r];
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!masks[r][i]) continue;
      const double err = std::abs(pred[i] - gt[i]);
      s.abs_err += err;
      if (err > k_) ++s.outliers;
      if (is_d1(err, gt[i])) ++s.d1;
      ++s.n;
    }
  }
}

RegionRows Accumulator::rows() const {
  RegionRows rows;
  for (int r = 0; r < 3; ++r) {
    MetricRow& row = rows[r];
    const Sums& s = sums_[r];
    row.region = kRegions[r];
    row.k = k_;
    row.n_pixels = s.n;
    row.present = s.n > 0;
    if (!row.present) continue;
    const double n = static_cast<double>(s.n);
    row.epe = s.abs_err / n;
    row.outlier_rate = 100.0 * static_cast<double>(s.outliers) / n;
    row.d1 = 100.0 * static_cast<double>(s.d1) / n;
  }
  return rows;
}

const MetricRow& row(const RegionRows& rows, Region region) { return rows[static_cast<int>(region)]; }

nlohmann::json to_json(const MetricRow& r) {
  nlohmann::json j = {{"region", to_string(r.region)}, {"present", r.present}, {"k", r.k},
                      {"n_pixels", r.n_pixels}};
  if (r.present) {
    j["epe"] = r.epe;
    j["outlier_rate"] = r.outlier_rate;
    j["d1"] = r.d1;
  } else {
    j["epe"] = nullptr;
    j["outlier_rate"] = nullptr;
    j["d1"] = nullptr;
  }
  return j;
}

MetricRow metric_row_from_json(const nlohmann::json& j) {
  MetricRow r;
  r.region = region_from_string(j.at("region").get<std::string>());
  r.present = j.at("present").get<bool>();
  r.k = j.at("k").get<double>();
  r.n_pixels = j.at("n_pixels").get<std::size_t>();
  if (r.present) {
    r.epe = j.at("epe").get<double>();
    r.outlier_rate = j.at("outlier_rate").get<double>();
    r.d1 = j.at("d1").get<double>();
  }
  return r;
}

Predictor network_predictor(const stereonet::ParamSet& params) {
  return [params](const scenegen::MultiBaselineFrame& f, int ref, int tgt) {
    return distill::teacher_predict(params, f.views.at(ref), f.views.at(tgt), f.target_on_left(ref, tgt));
  };
}

Predictor perfect_predictor() {
  return [](const scenegen::MultiBaselineFrame& f, int ref, int tgt) { return f.gt_disparity(ref, tgt); };
}

Predictor zero_predictor() {
  return [](const scenegen::MultiBaselineFrame& f, int, int) { return DisparityMap(f.height(), f.width(), 0.0); };
}

Report evaluate(const Predictor& predictor, std::span<const scenegen::MultiBaselineFrame> frames,
                const EvalOptions& opt) {
  if (frames.empty()) throw InvalidArgument("evaluation needs at least one frame");
  Report rep;
  rep.config_hash = opt.config_hash;
  rep.checkpoint_id = opt.checkpoint_id;
  Accumulator total(opt.k);
  if (opt.error_map_dir) std::filesystem::create_directories(*opt.error_map_dir);
  for (const auto& f : frames) {
    const DisparityMap pred = predictor(f, opt.ref_view, opt.tgt_view);
    const DisparityMap& gt = f.gt_disparity(opt.ref_view, opt.tgt_view);
    const Mask& occ = f.gt_occlusion(opt.ref_view, opt.tgt_view);
    total.add(pred, gt, occ);
    FrameResult fr;
    fr.frame_id = f.id;
    fr.rows = region_rows(pred, gt, occ, opt.k);
    double s = 0.0;
    for (double v : pred.values()) s += v;
    fr.mean_prediction = s / static_cast<double>(pred.size());
    if (opt.error_map_dir) {
      Map err(gt.height(), gt.width());
      for (std::size_t i = 0; i < err.size(); ++i) err[i] = std::abs(pred[i] - gt[i]);
      fr.error_map = "errors/" + f.id + ".pfm";
      dataset::write_pfm(*opt.error_map_dir / (f.id + ".pfm"), err);
    }
    rep.per_frame.push_back(std::move(fr));
  }
  rep.rows = total.rows();
  return rep;
}

const stereonet::ParamSet& inference_params(const distill::Checkpoint& ck) {
  const auto ema = nlohmann::json::json_pointer("/ablation/ema");
  const bool teacher = !ck.config.is_object() || !ck.config.contains(ema) || ck.config.at(ema).get<bool>();
  const auto& p = teacher ? ck.teacher : ck.student;
  if (p.entries().empty())
    throw InvalidArgument(std::string("checkpoint has no ") + (teacher ? "teacher" : "student") + " parameters");
  return p;
}

Report evaluate_checkpoint(const distill::Checkpoint& ck, std::span<const scenegen::MultiBaselineFrame> frames,
                           const EvalOptions& opt) {
  EvalOptions o = opt;
  if (o.checkpoint_id.empty()) o.checkpoint_id = ck.id;
  return evaluate(network_predictor(inference_params(ck)), frames, o);
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(to_json(row));
  nlohmann::json per = nlohmann::json::array();
  for (const auto& f : r.per_frame) {
    nlohmann::json fr_rows = nlohmann::json::array();
    for (const auto& row : f.rows) fr_rows.push_back(to_json(row));
    per.push_back({{"frame_id", f.frame_id},
                   {"rows", fr_rows},
                   {"mean_prediction", f.mean_prediction},
                   {"error_map", f.error_map}});
  }
  return {{"schema", kReportSchema},
          {"config_hash", r.config_hash},
          {"checkpoint_id", r.checkpoint_id},
          {"rows", rows},
          {"per_frame", per}};
}

namespace {

void validate_rows(const nlohmann::json& rows, const std::string& where) {
  if (!rows.is_array() || rows.size() != 3) throw InvalidArgument(where + ": 'rows' must be an array of 3 rows");
  std::size_t n[3] = {0, 0, 0};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = rows[i];
    if (!r.is_object()) throw InvalidArgument(where + ": row is not an object");
    for (const char* key : {"region", "present", "k", "n_pixels", "epe", "outlier_rate", "d1"})
      if (!r.contains(key)) throw InvalidArgument(where + ": row missing '" + key + "'");
    if (r.at("region") != to_string(kRegions[i])) throw InvalidArgument(where + ": rows must be OCC, NOC, ALL");
    if (!r.at("present").is_boolean() || !r.at("n_pixels").is_number_unsigned())
      throw InvalidArgument(where + ": malformed row fields");
    n[i] = r.at("n_pixels").get<std::size_t>();
    if (r.at("present").get<bool>()) {
      for (const char* key : {"outlier_rate", "d1"}) {
        if (!r.at(key).is_number()) throw InvalidArgument(where + ": '" + key + "' must be a number");
        const double v = r.at(key).get<double>();
        if (v < 0 || v > 100) throw InvalidArgument(where + ": '" + key + "' outside [0,100]");
      }
      if (!r.at("epe").is_number() || r.at("epe").get<double>() < 0)
        throw InvalidArgument(where + ": 'epe' must be a non-negative number");
    }
  }
  if (n[0] + n[1] != n[2]) throw InvalidArgument(where + ": OCC + NOC pixel counts differ from ALL");
}

}  // namespace

void validate_report_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("report must be a JSON object");
  if (j.value("schema", std::string{}) != kReportSchema) throw InvalidArgument("report schema tag missing or wrong");
  for (const char* key : {"config_hash", "checkpoint_id"})
    if (!j.contains(key) || !j.at(key).is_string()) throw InvalidArgument(std::string("report needs string '") + key + "'");
  if (!j.contains("rows")) throw InvalidArgument("report has no 'rows'");
  validate_rows(j.at("rows"), "rows");
  if (!j.contains("per_frame") || !j.at("per_frame").is_array()) throw InvalidArgument("report needs 'per_frame' array");
  for (const auto& f : j.at("per_frame")) {
    if (!f.contains("frame_id") || !f.at("frame_id").is_string()) throw InvalidArgument("per_frame entry without id");
    if (!f.contains("rows")) throw InvalidArgument("per_frame entry without rows");
    validate_rows(f.at("rows"), "per_frame '" + f.at("frame_id").get<std::string>() + "'");
  }
}

Report report_from_json(const nlohmann::json& j) {
  validate_report_json(j);
  Report r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  for (int i = 0; i < 3; ++i) r.rows[i] = metric_row_from_json(j.at("rows")[i]);
  for (const auto& f : j.at("per_frame")) {
    FrameResult fr;
    fr.frame_id = f.at("frame_id").get<std::string>();
    for (int i = 0; i < 3; ++i) fr.rows[i] = metric_row_from_json(f.at("rows")[i]);
    fr.mean_prediction = f.value("mean_prediction", 0.0);
    fr.error_map = f.value("error_map", std::string{});
    r.per_frame.push_back(std::move(fr));
  }
  return r;
}

std::string to_csv(const Report& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "config_hash,checkpoint_id,frame,region,present,n_pixels,epe,outlier_rate,k,d1\n";
  auto emit = [&](const std::string& frame, const RegionRows& rows) {
    for (const auto& row : rows) {
      os << r.config_hash << ',' << r.checkpoint_id << ',' << frame << ',' << to_string(row.region) << ','
         << (row.present ? 1 : 0) << ',' << row.n_pixels << ',';
      if (row.present)
        os << row.epe << ',' << row.outlier_rate << ',' << row.k << ',' << row.d1 << '\n';
      else
        os << ",," << row.k << ",\n";
    }
  };
  emit("*", r.rows);
  for (const auto& f : r.per_frame) emit(f.frame_id, f.rows);
  return os.str();
}

void write_report(const Report& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw Error("cannot write " + (dir / "report.json").string());
    out << to_json(r).dump(2) << "\n";
  }
  std::ofstream csv(dir / "report.csv");
  if (!csv) throw Error("cannot write " + (dir / "report.csv").string());
  csv << to_csv(r);
}

Report read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed report " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw Error("malformed report " + path.string() + ": " + e.what());
  }
}

}  // namespace bacon::evalkit
