#include "lcmon/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "lcmon/errors.hpp"

namespace lcmon {

using json = nlohmann::ordered_json;

namespace {

// viridis control points
constexpr double kRamp[][3] = {
    {0.267004, 0.004874, 0.329415}, {0.282623, 0.140926, 0.457517},
    {0.253935, 0.265254, 0.529983}, {0.206756, 0.371758, 0.553117},
    {0.163625, 0.471133, 0.558148}, {0.127568, 0.566949, 0.550556},
    {0.134692, 0.658636, 0.517649}, {0.266941, 0.748751, 0.440573},
    {0.477504, 0.821444, 0.318195}, {0.741388, 0.873449, 0.149561},
    {0.993248, 0.906157, 0.143936}};
constexpr std::size_t kRampSize = sizeof(kRamp) / sizeof(kRamp[0]);

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
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

}  // namespace

std::string colormap(double t) {
    t = std::clamp(t, 0.0, 1.0);
    double x = t * static_cast<double>(kRampSize - 1);
    std::size_t i = std::min(static_cast<std::size_t>(x), kRampSize - 2);
    double f = x - static_cast<double>(i);
    char buf[8];
    int rgb[3];
    for (int c = 0; c < 3; ++c) {
        double v = kRamp[i][c] + f * (kRamp[i + 1][c] - kRamp[i][c]);
        rgb[c] = static_cast<int>(std::lround(v * 255.0));
    }
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

std::string render_heatmap_svg(const HeatmapInput& in) {
    const std::size_t nx = in.x_labels.size();
    const std::size_t ny = in.y_labels.size();
    if (nx == 0 || ny == 0 || in.values.size() != nx * ny)
        throw UsageError("heatmap: label counts do not match value matrix");

    double vmin = in.values[0], vmax = in.values[0];
    for (double v : in.values) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    const double span = vmax > vmin ? vmax - vmin : 1.0;

    const int cell_w = 36, cell_h = 24;
    const int margin_left = 90, margin_top = 50, margin_bottom = 60, margin_right = 90;
    const int plot_w = cell_w * static_cast<int>(nx);
    const int plot_h = cell_h * static_cast<int>(ny);
    const int width = margin_left + plot_w + margin_right;
    const int height = margin_top + plot_h + margin_bottom;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
        << escape_xml(in.title) << "</text>\n";

    for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) {
            double t = (in.values[y * nx + x] - vmin) / span;
            svg << "<rect x=\"" << margin_left + static_cast<int>(x) * cell_w << "\" y=\""
                << margin_top + static_cast<int>(y) * cell_h << "\" width=\"" << cell_w
                << "\" height=\"" << cell_h << "\" fill=\"" << colormap(t) << "\"/>\n";
        }
    }
    for (std::size_t x = 0; x < nx; ++x)
        svg << "<text x=\"" << margin_left + static_cast<int>(x) * cell_w + cell_w / 2
            << "\" y=\"" << margin_top + plot_h + 16
            << "\" text-anchor=\"middle\" font-size=\"10\" class=\"x-label\">"
            << escape_xml(in.x_labels[x]) << "</text>\n";
    for (std::size_t y = 0; y < ny; ++y)
        svg << "<text x=\"" << margin_left - 6 << "\" y=\""
            << margin_top + static_cast<int>(y) * cell_h + cell_h / 2 + 4
            << "\" text-anchor=\"end\" font-size=\"10\" class=\"y-label\">"
            << escape_xml(in.y_labels[y]) << "</text>\n";
    svg << "<text x=\"" << margin_left + plot_w / 2 << "\" y=\"" << margin_top + plot_h + 40
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape_xml(in.x_axis_label)
        << "</text>\n";
    svg << "<text x=\"16\" y=\"" << margin_top + plot_h / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << margin_top + plot_h / 2 << ")\">" << escape_xml(in.y_axis_label) << "</text>\n";

    // color scale bar with recorded bounds
    const int bar_x = margin_left + plot_w + 20;
    for (int i = 0; i < plot_h; ++i) {
        double t = 1.0 - static_cast<double>(i) / std::max(1, plot_h - 1);
        svg << "<rect x=\"" << bar_x << "\" y=\"" << margin_top + i
            << "\" width=\"14\" height=\"1\" fill=\"" << colormap(t) << "\"/>\n";
    }
    svg << "<text x=\"" << bar_x + 18 << "\" y=\"" << margin_top + 8
        << "\" font-size=\"10\" class=\"scale-max\">" << fmt(vmax) << "</text>\n";
    svg << "<text x=\"" << bar_x + 18 << "\" y=\"" << margin_top + plot_h
        << "\" font-size=\"10\" class=\"scale-min\">" << fmt(vmin) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::string render_curves_svg(const CurveInput& in) {
    if (in.series.empty()) throw UsageError("curves: no series to render");
    const int width = 560, height = 360;
    const int ml = 70, mt = 40, mr = 30, mb = 60;
    const int pw = width - ml - mr, ph = height - mt - mb;

    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool first = true;
    for (const auto& s : in.series)
        for (auto [x, y] : s.points) {
            if (in.log_x) {
                if (x <= 0.0) throw UsageError("curves: log-x axis needs positive x values");
                x = std::log10(x);
            }
            if (first) {
                xmin = xmax = x;
                ymin = ymax = y;
                first = false;
            }
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (first) throw UsageError("curves: series hold no points");
    const double xs = xmax > xmin ? xmax - xmin : 1.0;
    const double ys = ymax > ymin ? ymax - ymin : 1.0;

    static const char* kColors[] = {"#4464ad", "#c8553d", "#3a7d44", "#8e5ba6",
                                    "#b8860b", "#2f8f9d"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << escape_xml(in.title) << "</text>\n";
    svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#555\"/>\n";

    for (std::size_t si = 0; si < in.series.size(); ++si) {
        const auto& s = in.series[si];
        std::ostringstream pts;
        for (auto [x, y] : s.points) {
            if (in.log_x) x = std::log10(x);
            double px = ml + (x - xmin) / xs * pw;
            double py = mt + ph - (y - ymin) / ys * ph;
            pts << fmt(px) << ',' << fmt(py) << ' ';
        }
        const char* color = kColors[si % (sizeof(kColors) / sizeof(kColors[0]))];
        svg << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 16 + 14 * static_cast<int>(si)
            << "\" font-size=\"11\" fill=\"" << color << "\">" << escape_xml(s.name)
            << "</text>\n";
    }
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 10
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(ymax) << "</text>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << mt + ph
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(ymin) << "</text>\n";
    svg << "<text x=\"" << ml << "\" y=\"" << mt + ph + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">"
        << fmt(in.log_x ? std::pow(10.0, xmin) : xmin) << "</text>\n";
    svg << "<text x=\"" << ml + pw << "\" y=\"" << mt + ph + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">"
        << fmt(in.log_x ? std::pow(10.0, xmax) : xmax) << "</text>\n";
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << mt + ph + 40
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape_xml(in.x_axis_label)
        << (in.log_x ? " (log scale)" : "") << "</text>\n";
    svg << "<text x=\"18\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 " << mt + ph / 2
        << ")\">" << escape_xml(in.y_axis_label) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::uint32_t crc32_of(const std::string& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw UsageError("cannot write file: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    std::filesystem::rename(tmp, path);
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    json j;
    j["files"] = json::array();
    for (const auto& e : entries) {
        char crc[16];
        std::snprintf(crc, sizeof(crc), "%08x", e.crc32);
        j["files"].push_back({{"name", e.name}, {"crc32", crc}, {"bytes", e.bytes}});
    }
    atomic_write(path, j.dump(2) + "\n");
}

}  // namespace lcmon
