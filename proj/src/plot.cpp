#include "bacon/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bacon/dataset.hpp"

namespace bacon::plot {

namespace fs = std::filesystem;

namespace {

constexpr double kW = 760, kH = 380, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string loss_curve_svg(const std::vector<experiment::LossRecord>& trace, const std::string& title) {
  std::ostringstream os;
  os << header(title);
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (trace.empty()) return os.str() + "</svg>\n";

  using Getter = double (*)(const experiment::LossRecord&);
  const std::array<std::pair<const char*, Getter>, 4> series = {{
      {"total", [](const experiment::LossRecord& r) { return r.total; }},
      {"L_c", [](const experiment::LossRecord& r) { return r.contrastive; }},
      {"L_p", [](const experiment::LossRecord& r) { return r.photometric; }},
      {"L_s", [](const experiment::LossRecord& r) { return r.smoothness; }},
  }};
  const std::array<const char*, 4> colors = {"#222222", "#d62728", "#1f77b4", "#2ca02c"};
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : trace)
    for (const auto& [_, get] : series) {
      const double v = get(r);
      if (v > 0 && std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  if (!(lo < INFINITY)) return os.str() + "</svg>\n";
  const double l0 = std::floor(std::log10(lo)), l1 = std::max(std::ceil(std::log10(hi)), l0 + 1);
  const double s0 = static_cast<double>(trace.front().step), s1 = std::max(static_cast<double>(trace.back().step), s0 + 1);
  auto px = [&](double step) { return kLeft + pw * (step - s0) / (s1 - s0); };
  auto py = [&](double v) { return kTop + ph * (1.0 - (std::log10(v) - l0) / (l1 - l0)); };
  for (double e = l0; e <= l1; e += 1) {
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << py(std::pow(10, e)) << "\" y2=\""
       << py(std::pow(10, e)) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(std::pow(10, e)) + 4 << "\" text-anchor=\"end\">1e" << e
       << "</text>\n";
  }
  os << "<text x=\"" << kLeft << "\" y=\"" << kH - 18 << "\">" << s0 << "</text>\n";
  os << "<text x=\"" << kLeft + pw << "\" y=\"" << kH - 18 << "\" text-anchor=\"end\">" << s1 << "</text>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 18 << "\" text-anchor=\"middle\">step</text>\n";
  const std::size_t stride = std::max<std::size_t>(1, trace.size() / 1000);
  for (std::size_t k = 0; k < series.size(); ++k) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[k] << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < trace.size(); i += stride) {
      const double v = series[k].second(trace[i]);
      if (v > 0 && std::isfinite(v)) os << px(static_cast<double>(trace[i].step)) << ',' << py(v) << ' ';
    }
    os << "\"/>\n";
    os << "<rect x=\"" << kW - kRight + 16 << "\" y=\"" << kTop + 10 + 20 * k << "\" width=\"14\" height=\"3\" fill=\""
       << colors[k] << "\"/><text x=\"" << kW - kRight + 36 << "\" y=\"" << kTop + 15 + 20 * k << "\">"
       << series[k].first << "</text>\n";
  }
  return os.str() + "</svg>\n";
}

std::string bar_chart_svg(const std::vector<NamedReport>& reports) {
  std::ostringstream os;
  os << header(">3px outliers by region");
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  double vmax = 1.0;
  for (const auto& r : reports)
    for (const auto& row : r.report.rows)
      if (row.present) vmax = std::max(vmax, row.outlier_rate);
  vmax = std::ceil(vmax * 1.1 / 5.0) * 5.0;
  for (int t = 0; t <= 5; ++t) {
    const double v = vmax * t / 5.0, y = kTop + ph * (1.0 - v / vmax);
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << y << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\"/><text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v
       << "%</text>\n";
  }
  const std::array<const char*, 3> colors = {"#d62728", "#1f77b4", "#555555"};
  const double group = reports.empty() ? pw : pw / static_cast<double>(reports.size());
  const double bar = std::min(40.0, group / 4.0);
  for (std::size_t g = 0; g < reports.size(); ++g) {
    const double gx = kLeft + group * g + (group - 3 * bar) / 2;
    for (int k = 0; k < 3; ++k) {
      const auto& row = reports[g].report.rows[k];
      const double v = row.present ? row.outlier_rate : 0.0;
      const double h = ph * v / vmax;
      os << "<rect x=\"" << gx + k * bar << "\" y=\"" << kTop + ph - h << "\" width=\"" << bar - 2 << "\" height=\"" << h
         << "\" fill=\"" << colors[k] << "\"/>\n";
      if (row.present)
        os << "<text x=\"" << gx + k * bar + bar / 2 << "\" y=\"" << kTop + ph - h - 3
           << "\" text-anchor=\"middle\" font-size=\"9\">" << std::round(v * 100) / 100 << "</text>\n";
    }
    os << "<text x=\"" << gx + 1.5 * bar << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
       << escape(reports[g].name) << "</text>\n";
  }
  const std::array<const char*, 3> names = {"OCC", "NOC", "ALL"};
  for (int k = 0; k < 3; ++k)
    os << "<rect x=\"" << kW - kRight + 16 << "\" y=\"" << kTop + 8 + 20 * k << "\" width=\"12\" height=\"12\" fill=\""
       << colors[k] << "\"/><text x=\"" << kW - kRight + 34 << "\" y=\"" << kTop + 18 + 20 * k << "\">" << names[k]
       << "</text>\n";
  return os.str() + "</svg>\n";
}

Image error_heatmap(const Map& err, double vmax) {
  if (!(vmax > 0)) throw InvalidArgument("heatmap range must be positive");
  static constexpr std::array<std::array<double, 3>, 5> stops = {{
      {0.00, 0.00, 0.02}, {0.34, 0.06, 0.43}, {0.73, 0.21, 0.33}, {0.98, 0.55, 0.04}, {0.99, 1.00, 0.64}}};
  Image img(3, err.height(), err.width());
  for (int y = 0; y < err.height(); ++y)
    for (int x = 0; x < err.width(); ++x) {
      const double t = std::clamp(std::isfinite(err(y, x)) ? err(y, x) / vmax : 1.0, 0.0, 1.0) * (stops.size() - 1);
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
      const double a = t - static_cast<double>(i);
      for (int c = 0; c < 3; ++c) img(c, y, x) = stops[i][c] + a * (stops[i + 1][c] - stops[i][c]);
    }
  return img;
}

PlotOutput plot_reports(const std::vector<fs::path>& report_paths, const std::vector<fs::path>& loss_logs,
                        const fs::path& out_dir) {
  if (report_paths.empty()) throw InvalidArgument("plot needs at least one report");
  PlotOutput out;
  fs::create_directories(out_dir);
  std::vector<NamedReport> reports;
  for (const auto& p : report_paths) {
    std::string name = p.parent_path().filename().string();
    if (name.empty() || name == "eval") name = p.parent_path().parent_path().filename().string();
    if (name.empty()) name = p.stem().string();
    reports.push_back({name, evalkit::read_report(p)});
  }

  const fs::path bars = out_dir / "outliers.svg";
  write_text(bars, bar_chart_svg(reports));
  out.files.push_back(bars);

  for (const auto& log_path : loss_logs) {
    const auto trace = experiment::read_loss_csv(log_path);
    std::string stem = log_path.parent_path().filename().string();
    if (stem.empty()) stem = "run";
    const fs::path svg = out_dir / ("loss_" + stem + ".svg");
    write_text(svg, loss_curve_svg(trace, "losses: " + stem));
    out.files.push_back(svg);
  }

  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r].report;
    if (rep.per_frame.empty()) {
      out.notices.push_back("gallery skipped for " + report_paths[r].string() + ": no per-frame entries");
      continue;
    }
    std::size_t written = 0;
    for (const auto& f : rep.per_frame) {
      if (f.error_map.empty()) continue;
      const fs::path src = report_paths[r].parent_path() / f.error_map;
      if (!fs::exists(src)) {
        out.notices.push_back("missing error map " + src.string());
        continue;
      }
      const fs::path dst = out_dir / "gallery" / (reports[r].name + "_" + f.frame_id + ".png");
      fs::create_directories(dst.parent_path());
      dataset::write_png_rgb(dst, error_heatmap(dataset::read_pfm(src), 8.0));
      out.files.push_back(dst);
      ++written;
    }
    if (written == 0)
      out.notices.push_back("gallery skipped for " + report_paths[r].string() + ": no error maps recorded");
  }
  return out;
}

}  // namespace bacon::plot
