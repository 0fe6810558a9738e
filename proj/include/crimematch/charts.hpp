#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace crimematch::charts {

/// Treated and control density against radius; one x tick per radius.
std::string density_svg(const std::string& title, std::span<const double> radii, std::span<const double> treated,
                        std::span<const double> control);

/// Raw CATE values as a jittered strip with quartile markers.
std::string cate_strip_svg(const std::string& title, std::span<const double> values);

/// Renders every density curve and CATE distribution referenced by the report
/// into `<output_dir>/charts`. Failures are appended to `log` and skipped.
std::vector<std::filesystem::path> emit_charts(const nlohmann::ordered_json& report,
                                               const std::filesystem::path& output_dir,
                                               std::vector<std::string>& log);

}  // namespace crimematch::charts
