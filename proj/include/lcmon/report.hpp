#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lcmon {

// Deterministic static SVG renderers: identical inputs yield byte-identical
// markup, so report bundles can be compared by checksum.

struct HeatmapInput {
    std::string title;
    std::string x_axis_label;
    std::string y_axis_label;
    std::vector<std::string> x_labels;
    std::vector<std::string> y_labels;
    std::vector<double> values;  // row-major [y][x]
};

struct CurveSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct CurveInput {
    std::string title;
    std::string x_axis_label;
    std::string y_axis_label;
    std::vector<CurveSeries> series;
    bool log_x = false;
};

std::string render_heatmap_svg(const HeatmapInput& input);
std::string render_curves_svg(const CurveInput& input);

// Perceptually uniform ramp (viridis control points), t in [0,1] -> #rrggbb.
std::string colormap(double t);

std::uint32_t crc32_of(const std::string& bytes);

// Write via temp file + rename so concurrent readers never see a partial file.
void atomic_write(const std::string& path, const std::string& content);

struct ManifestEntry {
    std::string name;
    std::uint32_t crc32 = 0;
    std::size_t bytes = 0;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace lcmon
