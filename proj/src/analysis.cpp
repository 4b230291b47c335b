#include "benchforge/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge::analysis {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Analysis, msg); }

constexpr std::array<const char*, 6> kTimerKeys = {"construction", "update",     "collocate",
                                                   "communicate",  "deliver",    "model_time"};

double* timer_slot(PhaseTimers& t, const std::string& key) {
    if (key == "construction") return &t.construction;
    if (key == "update") return &t.update;
    if (key == "collocate") return &t.collocate;
    if (key == "communicate") return &t.communicate;
    if (key == "deliver") return &t.deliver;
    if (key == "model_time") return &t.model_time;
    return nullptr;
}

}  // namespace

double PhaseTimers::phase(std::size_t i) const {
    switch (i) {
    case 0: return update;
    case 1: return collocate;
    case 2: return communicate;
    default: return deliver;
    }
}

const Stats& ResourceAggregate::phase(std::size_t i) const {
    switch (i) {
    case 0: return update;
    case 1: return collocate;
    case 2: return communicate;
    default: return deliver;
    }
}

PhaseTimers parse_timers(const std::string& text) {
    PhaseTimers t;
    std::set<std::string> seen;
    int lineno = 0;
    for (const auto& raw : util::split(text, '\n')) {
        ++lineno;
        std::string line = util::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key, value, extra;
        ss >> key >> value;
        if (value.empty() || (ss >> extra))
            fail("timer line " + std::to_string(lineno) + " is not '<key> <seconds>': " + line);
        double* slot = timer_slot(t, key);
        if (!slot) fail("unknown timer key '" + key + "' on line " + std::to_string(lineno));
        if (!seen.insert(key).second) fail("duplicate timer key '" + key + "'");
        try {
            std::size_t used = 0;
            *slot = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            fail("timer '" + key + "' has a non-numeric value: " + value);
        }
        if (!std::isfinite(*slot) || *slot < 0)
            fail("timer '" + key + "' must be finite and non-negative, got " + value);
    }
    for (const auto& key : kTimerKeys)
        if (!seen.count(key)) fail(std::string("missing timer key '") + key + "'");
    if (t.model_time <= 0) fail("model_time must be strictly positive");
    return t;
}

std::string render_timers(const PhaseTimers& t) {
    std::string out;
    out += "construction " + util::render_double(t.construction) + "\n";
    out += "update " + util::render_double(t.update) + "\n";
    out += "collocate " + util::render_double(t.collocate) + "\n";
    out += "communicate " + util::render_double(t.communicate) + "\n";
    out += "deliver " + util::render_double(t.deliver) + "\n";
    out += "model_time " + util::render_double(t.model_time) + "\n";
    return out;
}

double real_time_factor(const PhaseTimers& t) { return t.propagation_total() / t.model_time; }

std::array<double, 4> phase_fractions(const PhaseTimers& t) {
    double total = t.propagation_total();
    if (total <= 0) fail("phase fractions undefined: propagation total is zero");
    return {t.update / total, t.collocate / total, t.communicate / total, t.deliver / total};
}

Stats mean_and_sem(const std::vector<double>& samples) {
    if (samples.empty()) fail("cannot aggregate zero samples");
    Stats s;
    for (double v : samples) s.mean += v;
    s.mean /= static_cast<double>(samples.size());
    if (samples.size() == 1) return s;  // sem stays 0
    double ss = 0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
    s.sem = sd / std::sqrt(static_cast<double>(samples.size()));
    return s;
}

AnalysisResult aggregate_seeds(const std::vector<ScalingPoint>& points) {
    if (points.empty()) fail("no scaling points to aggregate");
    std::map<int, std::vector<const ScalingPoint*>> grouped;
    for (const auto& p : points) {
        if (p.resource_count <= 0)
            fail("resource count must be positive, got " + std::to_string(p.resource_count));
        grouped[p.resource_count].push_back(&p);
    }
    AnalysisResult result;
    for (auto& [count, group] : grouped) {
        std::set<long> seeds;
        for (const auto* p : group)
            if (!seeds.insert(p->seed).second)
                fail("duplicate seed " + std::to_string(p->seed) + " for resource count " +
                     std::to_string(count));
        ResourceAggregate agg;
        agg.resource_count = count;
        agg.n_seeds = static_cast<int>(group.size());
        auto collect = [&](auto getter) {
            std::vector<double> xs;
            xs.reserve(group.size());
            for (const auto* p : group) xs.push_back(getter(p->timers));
            return mean_and_sem(xs);
        };
        agg.construction = collect([](const PhaseTimers& t) { return t.construction; });
        agg.update = collect([](const PhaseTimers& t) { return t.update; });
        agg.collocate = collect([](const PhaseTimers& t) { return t.collocate; });
        agg.communicate = collect([](const PhaseTimers& t) { return t.communicate; });
        agg.deliver = collect([](const PhaseTimers& t) { return t.deliver; });
        agg.total = collect([](const PhaseTimers& t) { return t.propagation_total(); });
        agg.rtf = collect([](const PhaseTimers& t) { return real_time_factor(t); });
        if (agg.total.mean <= 0)
            fail("mean propagation total is zero for resource count " + std::to_string(count));
        for (std::size_t i = 0; i < 4; ++i)
            agg.fractions[i] = agg.phase(i).mean / agg.total.mean;
        result.per_count.emplace(count, std::move(agg));
    }
    return result;
}

ComparisonResult compare(const AnalysisResult& a, const AnalysisResult& b) {
    ComparisonResult cmp;
    auto phase_mean = [](const ResourceAggregate& agg, std::size_t i) {
        if (i < 4) return agg.phase(i).mean;
        return agg.total.mean;
    };
    const std::array<const char*, 5> names = {"update", "collocate", "communicate", "deliver",
                                              "total"};
    bool any = false;
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::map<int, double> per_count;
        for (const auto& [count, agg_a] : a.per_count) {
            auto it = b.per_count.find(count);
            if (it == b.per_count.end()) continue;
            double base = phase_mean(agg_a, i);
            if (base == 0) fail("relative change undefined: baseline mean is zero for '" +
                                std::string(names[i]) + "' at resource count " +
                                std::to_string(count));
            per_count[count] = (phase_mean(it->second, i) - base) / base;
            any = true;
        }
        if (!per_count.empty()) {
            double sum = 0;
            for (const auto& [_, v] : per_count) sum += v;
            cmp.overall[names[i]] = sum / static_cast<double>(per_count.size());
        }
        cmp.per_count[names[i]] = std::move(per_count);
    }
    if (!any) fail("the two results share no resource counts");
    return cmp;
}

std::string render_table(const AnalysisResult& result) {
    std::string out =
        "resource_count\tphase\tmean_s\tstderr_s\tfraction\trtf_mean\trtf_stderr\tn_seeds\n";
    auto d = [](double v) { return util::render_double(v); };
    for (const auto& [count, agg] : result.per_count) {
        auto row = [&](const std::string& phase, const Stats& s, const std::string& fraction) {
            out += util::render_int(count) + "\t" + phase + "\t" + d(s.mean) + "\t" + d(s.sem) +
                   "\t" + fraction + "\t" + d(agg.rtf.mean) + "\t" + d(agg.rtf.sem) + "\t" +
                   util::render_int(agg.n_seeds) + "\n";
        };
        row("construction", agg.construction, "-");
        for (std::size_t i = 0; i < 4; ++i) row(kPhases[i], agg.phase(i), d(agg.fractions[i]));
        row("total", agg.total, "-");
    }
    return out;
}

PlotFiles emit_plot(const AnalysisResult& result, PlotStyle style,
                    const std::filesystem::path& out_dir, const std::string& basename,
                    bool with_svg) {
    util::ensure_dir(out_dir);
    PlotFiles files;
    files.table = out_dir / (basename + ".tsv");
    util::write_file_atomic(files.table, render_table(result));
    if (with_svg) {
        files.svg = out_dir / (basename + ".svg");
        util::write_file_atomic(files.svg, render_svg(result, style));
    }
    return files;
}

}  // namespace benchforge::analysis
