#include <cmath>
#include <cstdio>
#include <sstream>

#include "benchforge/analysis.hpp"

namespace benchforge::analysis {

namespace {

// Fixed two-decimal coordinates keep the output byte-stable for identical
// inputs without depending on locale or stream state.
std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

constexpr std::array<const char*, 5> kSeriesNames = {"update", "collocate", "communicate",
                                                     "deliver", "total"};
constexpr std::array<const char*, 5> kSeriesColors = {"#4878cf", "#6acc65", "#d65f5f", "#b47cc7",
                                                      "#333333"};

struct Panel {
    double x0, y0, w, h;  // plot area in canvas coordinates
    double map_x(double t) const { return x0 + t * w; }      // t in [0,1]
    double map_y(double t) const { return y0 + h - t * h; }  // t in [0,1], origin bottom
};

void frame(std::ostringstream& svg, const Panel& p, const std::string& title) {
    svg << "<rect x=\"" << px(p.x0) << "\" y=\"" << px(p.y0) << "\" width=\"" << px(p.w)
        << "\" height=\"" << px(p.h) << "\" fill=\"none\" stroke=\"#999999\"/>\n";
    svg << "<text x=\"" << px(p.x0 + p.w / 2) << "\" y=\"" << px(p.y0 - 10)
        << "\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
}

}  // namespace

std::string render_svg(const AnalysisResult& result, PlotStyle style) {
    const double width = 940, height = 440;
    Panel left{70, 50, 360, 320};
    Panel right{540, 50, 300, 320};

    std::vector<const ResourceAggregate*> aggs;
    for (const auto& [_, agg] : result.per_count) aggs.push_back(&agg);
    std::size_t n = aggs.size();

    double ymax = 0;
    for (const auto* a : aggs) ymax = std::max(ymax, a->total.mean + a->total.sem);
    if (ymax <= 0) ymax = 1;
    ymax *= 1.08;

    auto xpos = [&](std::size_t i) {
        if (n == 1) return left.map_x(0.5);
        return left.map_x(0.08 + 0.84 * static_cast<double>(i) / static_cast<double>(n - 1));
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << px(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
        << (style == PlotStyle::Weak ? "weak scaling" : "strong scaling")
        << ": state propagation</text>\n";

    frame(svg, left, "phase times [s]");
    frame(svg, right, "phase share of total");

    // y ticks, left panel
    for (int t = 0; t <= 4; ++t) {
        double frac = t / 4.0;
        double y = left.map_y(frac);
        svg << "<line x1=\"" << px(left.x0 - 4) << "\" y1=\"" << px(y) << "\" x2=\"" << px(left.x0)
            << "\" y2=\"" << px(y) << "\" stroke=\"#999999\"/>\n";
        svg << "<text x=\"" << px(left.x0 - 8) << "\" y=\"" << px(y + 4)
            << "\" text-anchor=\"end\" font-size=\"11\">" << label(frac * ymax) << "</text>\n";
    }
    // x tick labels for both panels: the resource counts
    for (std::size_t i = 0; i < n; ++i) {
        svg << "<text x=\"" << px(xpos(i)) << "\" y=\"" << px(left.y0 + left.h + 18)
            << "\" text-anchor=\"middle\" font-size=\"11\">" << aggs[i]->resource_count
            << "</text>\n";
    }
    svg << "<text x=\"" << px(left.x0 + left.w / 2) << "\" y=\"" << px(left.y0 + left.h + 38)
        << "\" text-anchor=\"middle\" font-size=\"12\">resources</text>\n";

    // series: four phases plus total, with error bars
    for (std::size_t s = 0; s < kSeriesNames.size(); ++s) {
        auto stat = [&](const ResourceAggregate& a) -> const Stats& {
            return s < 4 ? a.phase(s) : a.total;
        };
        svg << "<polyline fill=\"none\" stroke=\"" << kSeriesColors[s] << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < n; ++i)
            svg << px(xpos(i)) << "," << px(left.map_y(stat(*aggs[i]).mean / ymax)) << " ";
        svg << "\"/>\n";
        for (std::size_t i = 0; i < n; ++i) {
            const Stats& st = stat(*aggs[i]);
            double x = xpos(i);
            svg << "<circle cx=\"" << px(x) << "\" cy=\"" << px(left.map_y(st.mean / ymax))
                << "\" r=\"2.5\" fill=\"" << kSeriesColors[s] << "\"/>\n";
            if (st.sem > 0) {
                double ylo = left.map_y(std::max(0.0, st.mean - st.sem) / ymax);
                double yhi = left.map_y(std::min(ymax, st.mean + st.sem) / ymax);
                svg << "<line x1=\"" << px(x) << "\" y1=\"" << px(ylo) << "\" x2=\"" << px(x)
                    << "\" y2=\"" << px(yhi) << "\" stroke=\"" << kSeriesColors[s] << "\"/>\n";
            }
        }
    }

    // right panel: stacked fraction bars per resource count
    double band = right.w / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double bx = right.x0 + band * (static_cast<double>(i) + 0.2);
        double bw = band * 0.6;
        double acc = 0;
        for (std::size_t s = 0; s < 4; ++s) {
            double f = aggs[i]->fractions[s];
            double y1 = right.map_y(acc + f);
            double hh = right.h * f;
            svg << "<rect x=\"" << px(bx) << "\" y=\"" << px(y1) << "\" width=\"" << px(bw)
                << "\" height=\"" << px(hh) << "\" fill=\"" << kSeriesColors[s] << "\"/>\n";
            acc += f;
        }
        svg << "<text x=\"" << px(bx + bw / 2) << "\" y=\"" << px(right.y0 + right.h + 18)
            << "\" text-anchor=\"middle\" font-size=\"11\">" << aggs[i]->resource_count
            << "</text>\n";
    }
    svg << "<text x=\"" << px(right.x0 + right.w / 2) << "\" y=\"" << px(right.y0 + right.h + 38)
        << "\" text-anchor=\"middle\" font-size=\"12\">resources</text>\n";

    // legend
    for (std::size_t s = 0; s < kSeriesNames.size(); ++s) {
        double y = 60 + 20 * static_cast<double>(s);
        svg << "<rect x=\"855\" y=\"" << px(y - 9) << "\" width=\"12\" height=\"12\" fill=\""
            << kSeriesColors[s] << "\"/>\n";
        svg << "<text x=\"872\" y=\"" << px(y + 2) << "\" font-size=\"12\">" << kSeriesNames[s]
            << "</text>\n";
    }

    svg << "</svg>\n";
    return svg.str();
}

}  // namespace benchforge::analysis
