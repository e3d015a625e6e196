#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bacon/distill.hpp"
#include "bacon/scenegen.hpp"
#include "bacon/tensor.hpp"

namespace bacon::evalkit {

enum class Region { occ, noc, all };
std::string to_string(Region r);
Region region_from_string(const std::string& s);

// Throw on an empty valid set or mismatched shapes.
double epe(const DisparityMap& pred, const DisparityMap& gt, const Mask& valid);
double outlier_rate(const DisparityMap& pred, const DisparityMap& gt, const Mask& valid, double k);
// Outlier iff |err| > 3 and |err| > 0.05·gt. Non-positive gt on a valid pixel throws.
double d1_rate(const DisparityMap& pred, const DisparityMap& gt, const Mask& valid);

struct MetricRow {
  Region region = Region::all;
  bool present = false;  // false when the region has no pixels
  double epe = 0;
  double outlier_rate = 0;  // percent
  double k = 3;
  double d1 = 0;  // percent
  std::size_t n_pixels = 0;
};

using RegionRows = std::array<MetricRow, 3>;  // OCC, NOC, ALL

// Pixels with finite, positive GT disparity.
Mask valid_pixels(const DisparityMap& gt);

// One scalar metric per region; std::nullopt for an empty region.
using MetricFn = std::function<double(const DisparityMap&, const DisparityMap&, const Mask&)>;
std::array<std::optional<double>, 3> region_split(const MetricFn& fn, const DisparityMap& pred,
                                                  const DisparityMap& gt, const Mask& occ);

// All metrics per region.
RegionRows region_rows(const DisparityMap& pred, const DisparityMap& gt, const Mask& occ, double k = 3);

// Pixel-weighted fold over frames, in call order.
class Accumulator {
 public:
  explicit Accumulator(double k = 3) : k_(k) {}
  void add(const DisparityMap& pred, const DisparityMap& gt, const Mask& occ);
  RegionRows rows() const;

 private:
  struct Sums {
    double abs_err = 0;
    std::size_t outliers = 0;
    std::size_t d1 = 0;
    std::size_t n = 0;
  };
  double k_;
  std::array<Sums, 3> sums_{};
};

nlohmann::json to_json(const MetricRow& r);
MetricRow metric_row_from_json(const nlohmann::json& j);

// Produces a disparity for frame's (ref, tgt) pair in the reference frame.
using Predictor = std::function<DisparityMap(const scenegen::MultiBaselineFrame&, int ref, int tgt)>;
Predictor network_predictor(const stereonet::ParamSet& params);
Predictor perfect_predictor();
Predictor zero_predictor();

struct EvalOptions {
  int ref_view = 0;
  int tgt_view = 1;
  double k = 3;
  std::string config_hash;
  std::string checkpoint_id;
  // When set, per-frame |pred − gt| maps are written here as PFM.
  std::optional<std::filesystem::path> error_map_dir;
};

struct FrameResult {
  std::string frame_id;
  RegionRows rows;
  double mean_prediction = 0;
  std::string error_map;  // relative path, empty when not written
};

struct Report {
  std::string config_hash;
  std::string checkpoint_id;
  RegionRows rows;
  std::vector<FrameResult> per_frame;
};

Report evaluate(const Predictor& predictor, std::span<const scenegen::MultiBaselineFrame> frames,
                const EvalOptions& opt);
// The network used at inference: the teacher, or the student when the run had
// EMA off (the teacher then never leaves its initialization).
const stereonet::ParamSet& inference_params(const distill::Checkpoint& ck);
Report evaluate_checkpoint(const distill::Checkpoint& ck, std::span<const scenegen::MultiBaselineFrame> frames,
                           const EvalOptions& opt);

inline constexpr const char* kReportSchema = "bacon-report/1";

nlohmann::json to_json(const Report& r);
Report report_from_json(const nlohmann::json& j);
// Throws InvalidArgument describing the first schema violation.
void validate_report_json(const nlohmann::json& j);

// report.json + report.csv inside dir.
void write_report(const Report& r, const std::filesystem::path& dir);
// Errors name the offending file.
Report read_report(const std::filesystem::path& path);
std::string to_csv(const Report& r);

const MetricRow& row(const RegionRows& rows, Region region);

}  // namespace bacon::evalkit
