#pragma once

#include "deq/cli/config.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace deq::cli {

extern const char* const kArtifactVersion;

// Reproducibility stamp carried by every output file.
struct RunStamp {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;

    // "deq_lab <version> <command> config=<hash> seed=<seed>"
    std::string line() const;
    Json json() const;
};

RunStamp make_stamp(const std::string& command, const Json& cfg, std::uint64_t seed);

// Pretty JSON with a trailing newline; {"meta": stamp, ...body}.
void write_report(const std::filesystem::path& path, const RunStamp& stamp, const Json& body);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    // Optional horizontal reference line (e.g. the contraction limit 1).
    std::optional<double> reference;
};

// Minimal SVG line chart: axes, min/max tick labels, one polyline per series.
// Points with non-finite coordinates (or non-positive ones on a log axis) are
// dropped.
std::string svg_line_plot(const PlotSpec& spec, const std::vector<Series>& series,
                          const std::string& stamp_line);
void write_svg(const std::filesystem::path& path, const PlotSpec& spec,
               const std::vector<Series>& series, const std::string& stamp_line);

}  // namespace deq::cli
