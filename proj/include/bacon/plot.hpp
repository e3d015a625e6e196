#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bacon/evalkit.hpp"
#include "bacon/experiment.hpp"

namespace bacon::plot {

// Total and per-term losses against step, log-scaled y axis.
std::string loss_curve_svg(const std::vector<experiment::LossRecord>& trace, const std::string& title);

struct NamedReport {
  std::string name;
  evalkit::Report report;
};

// One group per report in the given order, OCC/NOC/ALL outlier-rate bars.
std::string bar_chart_svg(const std::vector<NamedReport>& reports);

// |error| map rendered with a fixed colormap, saturating at vmax pixels.
Image error_heatmap(const Map& err, double vmax);

struct PlotOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> notices;
};

// Reads each report (errors name the file), renders the bar chart, loss curves
// from any loss.csv beside a report's run directory, and the heatmap gallery.
PlotOutput plot_reports(const std::vector<std::filesystem::path>& report_paths,
                        const std::vector<std::filesystem::path>& loss_logs, const std::filesystem::path& out_dir);

}  // namespace bacon::plot
