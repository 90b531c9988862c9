#include "deq/cli/output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace deq::cli {

const char* const kArtifactVersion = "0.1.0";

std::string RunStamp::line() const {
    return std::string("deq_lab ") + kArtifactVersion + " " + command + " config=" + config_hash +
           " seed=" + std::to_string(seed);
}

Json RunStamp::json() const {
    Json j;
    j["tool"] = "deq_lab";
    j["version"] = kArtifactVersion;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    return j;
}

RunStamp make_stamp(const std::string& command, const Json& cfg, std::uint64_t seed) {
    return RunStamp{command, config_hash(cfg), seed};
}

void write_report(const std::filesystem::path& path, const RunStamp& stamp, const Json& body) {
    Json doc;
    doc["meta"] = stamp.json();
    for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

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

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

struct Axis {
    bool log = false;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
    double t(double v) const { return log ? std::log10(v) : v; }
    void add(double v) {
        if (!usable(v)) return;
        lo = std::min(lo, t(v));
        hi = std::max(hi, t(v));
    }
    void finish() {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-300 || hi - lo < 1e-12 * std::abs(hi)) {
            const double pad = std::max(std::abs(hi) * 1e-3, 1e-3);
            lo -= pad;
            hi += pad;
        }
    }
    double frac(double v) const { return (t(v) - lo) / (hi - lo); }
    double untransform(double u) const { return log ? std::pow(10.0, u) : u; }
};

}  // namespace

std::string svg_line_plot(const PlotSpec& spec, const std::vector<Series>& series,
                          const std::string& stamp_line) {
    Axis ax{spec.log_x};
    Axis ay{spec.log_y};
    for (const auto& s : series) {
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (ax.usable(s.x[k]) && ay.usable(s.y[k])) {
                ax.add(s.x[k]);
                ay.add(s.y[k]);
            }
        }
    }
    if (spec.reference) ay.add(*spec.reference);
    ax.finish();
    ay.finish();

    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto px = [&](double v) { return kLeft + ax.frac(v) * pw; };
    auto py = [&](double v) { return kTop + (1.0 - ay.frac(v)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<!-- " << escape(stamp_line) << " -->\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << coord(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(spec.title) << "</text>\n";
    o << "<rect x=\"" << coord(kLeft) << "\" y=\"" << coord(kTop) << "\" width=\"" << coord(pw)
      << "\" height=\"" << coord(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

    const double x0 = ax.untransform(ax.lo);
    const double x1 = ax.untransform(ax.hi);
    const double y0 = ay.untransform(ay.lo);
    const double y1 = ay.untransform(ay.hi);
    const double base = kTop + ph;
    o << "<text x=\"" << coord(kLeft) << "\" y=\"" << coord(base + 16) << "\" text-anchor=\"start\">"
      << fmt(x0) << "</text>\n";
    o << "<text x=\"" << coord(kLeft + pw) << "\" y=\"" << coord(base + 16) << "\" text-anchor=\"end\">"
      << fmt(x1) << "</text>\n";
    o << "<text x=\"" << coord(kLeft - 6) << "\" y=\"" << coord(base) << "\" text-anchor=\"end\">"
      << fmt(y0) << "</text>\n";
    o << "<text x=\"" << coord(kLeft - 6) << "\" y=\"" << coord(kTop + 10) << "\" text-anchor=\"end\">"
      << fmt(y1) << "</text>\n";
    o << "<text x=\"" << coord(kLeft + pw / 2) << "\" y=\"" << coord(kHeight - 12)
      << "\" text-anchor=\"middle\">" << escape(spec.x_label) << (spec.log_x ? " (log)" : "")
      << "</text>\n";
    o << "<text transform=\"translate(18," << coord(kTop + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(spec.y_label)
      << (spec.log_y ? " (log)" : "") << "</text>\n";

    if (spec.reference && ay.usable(*spec.reference)) {
        const double yr = py(*spec.reference);
        o << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(yr) << "\" x2=\"" << coord(kLeft + pw)
          << "\" y2=\"" << coord(yr) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    }

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % (sizeof kColors / sizeof kColors[0])];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t k = 0; k < series[s].x.size() && k < series[s].y.size(); ++k) {
            const double xv = series[s].x[k];
            const double yv = series[s].y[k];
            if (!ax.usable(xv) || !ay.usable(yv)) continue;
            o << (first ? "" : " ") << coord(px(xv)) << "," << coord(py(yv));
            first = false;
        }
        o << "\"/>\n";
        const double ly = kTop + 14.0 + 18.0 * static_cast<double>(s);
        o << "<line x1=\"" << coord(kLeft + pw + 10) << "\" y1=\"" << coord(ly - 4) << "\" x2=\""
          << coord(kLeft + pw + 30) << "\" y2=\"" << coord(ly - 4) << "\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << coord(kLeft + pw + 34) << "\" y=\"" << coord(ly) << "\">"
          << escape(series[s].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

void write_svg(const std::filesystem::path& path, const PlotSpec& spec,
               const std::vector<Series>& series, const std::string& stamp_line) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << svg_line_plot(spec, series, stamp_line);
}

}  // namespace deq::cli
