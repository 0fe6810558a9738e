#include "crimematch/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "crimematch/csv.hpp"
#include "crimematch/estimate.hpp"
#include "crimematch/pipeline.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::charts {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" + num(kWidth / 2) +
         "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape_xml(title) + "</text>\n";
}

/// Evenly spaced y-axis values covering [lo, hi].
std::vector<double> y_ticks(double lo, double hi) {
  std::vector<double> out;
  for (int i = 0; i <= 4; ++i) out.push_back(lo + (hi - lo) * i / 4.0);
  return out;
}

struct Scale {
  double lo, hi, px_lo, px_hi;
  double operator()(double v) const { return hi > lo ? px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo) : (px_lo + px_hi) / 2; }
};

std::string polyline(std::span<const double> xs, std::span<const double> ys, const Scale& sx, const Scale& sy,
                     const char* color) {
  std::string out = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? " " : "") + num(sx(xs[i])) + "," + num(sy(ys[i]));
  out += "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out += "<circle cx=\"" + num(sx(xs[i])) + "\" cy=\"" + num(sy(ys[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
  }
  return out;
}

}  // namespace

std::string density_svg(const std::string& title, std::span<const double> radii, std::span<const double> treated,
                        std::span<const double> control) {
  double y_max = 0.0;
  for (double v : treated) y_max = std::max(y_max, v);
  for (double v : control) y_max = std::max(y_max, v);
  if (y_max <= 0) y_max = 1.0;
  const Scale sx{radii.empty() ? 0 : radii.front(), radii.empty() ? 1 : radii.back(), kLeft, kWidth - kRight};
  const Scale sy{0.0, y_max * 1.05, kHeight - kBottom, kTop};
  std::string svg = header(title);
  svg += "<g class=\"x-axis\">\n";
  for (double r : radii) {
    svg += "<line class=\"x-tick\" x1=\"" + num(sx(r)) + "\" x2=\"" + num(sx(r)) + "\" y1=\"" + num(kHeight - kBottom) +
           "\" y2=\"" + num(kHeight - kBottom + 5) + "\" stroke=\"black\"/><text x=\"" + num(sx(r)) + "\" y=\"" +
           num(kHeight - kBottom + 18) + "\" text-anchor=\"middle\">" + label(r) + "</text>\n";
  }
  svg += "</g>\n<text x=\"" + num((kLeft + kWidth - kRight) / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\">radius (m)</text>\n<g class=\"y-axis\">\n";
  for (double t : y_ticks(0.0, y_max * 1.05)) {
    svg += "<line x1=\"" + num(kLeft - 5) + "\" x2=\"" + num(kWidth - kRight) + "\" y1=\"" + num(sy(t)) + "\" y2=\"" +
           num(sy(t)) + "\" stroke=\"#dddddd\"/><text x=\"" + num(kLeft - 8) + "\" y=\"" + num(sy(t) + 4) +
           "\" text-anchor=\"end\">" + label(t) + "</text>\n";
  }
  svg += "</g>\n<text transform=\"translate(14," + num((kTop + kHeight - kBottom) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">crimes per square mile</text>\n";
  svg += polyline(radii, control, sx, sy, "#2471a3");
  svg += polyline(radii, treated, sx, sy, "#c0392b");
  svg += "<text x=\"" + num(kWidth - kRight - 90) + "\" y=\"" + num(kTop + 10) +
         "\" fill=\"#c0392b\">treated</text>\n<text x=\"" + num(kWidth - kRight - 90) + "\" y=\"" + num(kTop + 24) +
         "\" fill=\"#2471a3\">control</text>\n</svg>\n";
  return svg;
}

std::string cate_strip_svg(const std::string& title, std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.empty() ? 0 : sorted.front(), hi = sorted.empty() ? 1 : sorted.back();
  const double pad = hi > lo ? (hi - lo) * 0.05 : 1.0;
  const Scale sx{lo - pad, hi + pad, kLeft, kWidth - kRight};
  const double mid = (kTop + kHeight - kBottom) / 2;
  std::string svg = header(title);
  for (int i = 0; i <= 4; ++i) {
    const double v = sx.lo + (sx.hi - sx.lo) * i / 4.0;
    svg += "<line x1=\"" + num(sx(v)) + "\" x2=\"" + num(sx(v)) + "\" y1=\"" + num(kHeight - kBottom) + "\" y2=\"" +
           num(kHeight - kBottom + 5) + "\" stroke=\"black\"/><text x=\"" + num(sx(v)) + "\" y=\"" +
           num(kHeight - kBottom + 18) + "\" text-anchor=\"middle\">" + label(v) + "</text>\n";
  }
  svg += "<text x=\"" + num((kLeft + kWidth - kRight) / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\">CATE</text>\n";
  const double band = (kHeight - kBottom - kTop) * 0.35;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double jitter = static_cast<double>(splitmix64(i) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    svg += "<circle cx=\"" + num(sx(values[i])) + "\" cy=\"" + num(mid + jitter * band) +
           "\" r=\"2\" fill=\"#34495e\" fill-opacity=\"0.5\"/>\n";
  }
  if (!sorted.empty()) {
    const double q[3] = {matching::percentile(sorted, 25), matching::percentile(sorted, 50),
                         matching::percentile(sorted, 75)};
    const char* names[3] = {"q25", "median", "q75"};
    for (int i = 0; i < 3; ++i) {
      svg += "<line x1=\"" + num(sx(q[i])) + "\" x2=\"" + num(sx(q[i])) + "\" y1=\"" + num(mid - band - 8) +
             "\" y2=\"" + num(mid + band + 8) + "\" stroke=\"#c0392b\" stroke-width=\"" + (i == 1 ? "2" : "1") +
             "\"/><text x=\"" + num(sx(q[i])) + "\" y=\"" + num(mid - band - 12) +
             "\" text-anchor=\"middle\" fill=\"#c0392b\">" + names[i] + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> emit_charts(const nlohmann::ordered_json& report,
                                               const std::filesystem::path& output_dir,
                                               std::vector<std::string>& log) {
  std::vector<std::filesystem::path> written;
  if (!report.contains("structures") || !report["structures"].is_array()) {
    log.push_back("charts: report has no structures");
    return written;
  }
  const auto dir = output_dir / "charts";
  for (const auto& s : report["structures"]) {
    const std::string name = s.value("name", "");
    const std::string stem = pipeline::file_stem(name);
    try {
      if (s.contains("density") && s["density"].is_object()) {
        const auto& d = s["density"];
        const auto radii = d.at("radii_m").get<std::vector<double>>();
        const auto treated = d.at("treated").get<std::vector<double>>();
        const auto control = d.at("control").get<std::vector<double>>();
        const auto path = dir / ("density_" + stem + ".svg");
        csv::write_file(path, density_svg(name + ": crime density by radius", radii, treated, control));
        written.push_back(path);
      }
    } catch (const std::exception& e) {
      log.push_back("charts: density chart for " + name + " failed: " + e.what());
    }
    try {
      const auto cate_path = output_dir / ("cate_" + stem + ".csv");
      std::vector<double> values;
      if (std::filesystem::exists(cate_path)) {
        for (const auto& e : estimate::estimates_from_csv(csv::read_file(cate_path))) values.push_back(e.value);
      }
      if (values.empty()) {
        log.push_back("charts: no CATE values for " + name + ", distribution chart skipped");
        continue;
      }
      const auto path = dir / ("cate_" + stem + ".svg");
      csv::write_file(path, cate_strip_svg(name + ": CATE distribution", values));
      written.push_back(path);
    } catch (const std::exception& e) {
      log.push_back("charts: CATE chart for " + name + " failed: " + e.what());
    }
  }
  return written;
}

}  // namespace crimematch::charts
