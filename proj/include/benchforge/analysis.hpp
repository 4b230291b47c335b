#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace benchforge::analysis {

inline constexpr std::array<const char*, 4> kPhases = {"update", "collocate", "communicate",
                                                       "deliver"};

// Wall-clock timer readings for one benchmark run, in seconds, plus the
// simulated model time they cover.
struct PhaseTimers {
    double construction = 0;
    double update = 0;
    double collocate = 0;
    double communicate = 0;
    double deliver = 0;
    double model_time = 0;  // strictly positive

    double propagation_total() const { return update + collocate + communicate + deliver; }
    double phase(std::size_t i) const;
};

// Parses the timer file format: one "<key> <seconds>" pair per line, blank
// lines and '#' comments ignored.  Exactly the six keys construction,
// update, collocate, communicate, deliver, model_time must appear once each.
PhaseTimers parse_timers(const std::string& text);
std::string render_timers(const PhaseTimers& t);

// Wall time spent propagating state per unit of simulated time.
double real_time_factor(const PhaseTimers& t);

// Share of each propagation phase in the total; sums to 1.
std::array<double, 4> phase_fractions(const PhaseTimers& t);

// --- aggregation across seeds --------------------------------------------

struct ScalingPoint {
    int resource_count = 0;
    long seed = 0;
    PhaseTimers timers;
};

struct Stats {
    double mean = 0;
    double sem = 0;  // standard error of the mean, 0 for a single sample
};

Stats mean_and_sem(const std::vector<double>& samples);

struct ResourceAggregate {
    int resource_count = 0;
    int n_seeds = 0;
    Stats construction, update, collocate, communicate, deliver, total;
    Stats rtf;                       // real-time factor, aggregated per seed
    std::array<double, 4> fractions{};  // of mean phase times in mean total

    const Stats& phase(std::size_t i) const;
};

struct AnalysisResult {
    std::map<int, ResourceAggregate> per_count;  // keyed by resource count
};

AnalysisResult aggregate_seeds(const std::vector<ScalingPoint>& points);

// --- comparison -----------------------------------------------------------

// Relative change (b - a) / a of mean phase times, per resource count and
// over the counts both sides share.
struct ComparisonResult {
    std::map<std::string, std::map<int, double>> per_count;  // phase -> count -> change
    std::map<std::string, double> overall;                   // phase -> mean change
};

ComparisonResult compare(const AnalysisResult& a, const AnalysisResult& b);

// --- rendering -------------------------------------------------------------

enum class PlotStyle { Weak, Strong };

// Tab-separated table, one row per (resource count, phase) plus a
// construction and a total row per count.  Numbers render in shortest
// round-trip form so the table re-parses to the exact values.
std::string render_table(const AnalysisResult& result);

// Deterministic standalone SVG: absolute phase times with error bars on the
// left panel, stacked phase fractions on the right.
std::string render_svg(const AnalysisResult& result, PlotStyle style);

struct PlotFiles {
    std::filesystem::path table;
    std::filesystem::path svg;  // empty when with_svg = false
};

PlotFiles emit_plot(const AnalysisResult& result, PlotStyle style,
                    const std::filesystem::path& out_dir, const std::string& basename,
                    bool with_svg);

}  // namespace benchforge::analysis
