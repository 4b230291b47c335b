#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "benchforge/analysis.hpp"
#include "benchforge/config.hpp"
#include "benchforge/controller.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/provenance.hpp"
#include "benchforge/util.hpp"

namespace {

using namespace benchforge;

struct GlobalOptions {
    std::string site_root = "share/benchforge";
    std::string config_root;   // default: <site>/configs
    std::string archive_root = "benchforge-archive";
    std::string work_root = "benchforge-work";
    bool porcelain = false;

    ctrl::ControllerOptions controller() const {
        ctrl::ControllerOptions opts;
        opts.site_root = site_root;
        if (!config_root.empty()) opts.config_root = config_root;
        opts.work_root = work_root;
        return opts;
    }
};

std::map<std::string, std::string> parse_sets(const std::vector<std::string>& sets) {
    std::map<std::string, std::string> overrides;
    for (const auto& s : sets) {
        auto pos = s.find('=');
        if (pos == std::string::npos || pos == 0)
            throw Error(ErrorKind::Usage, "--set expects key=value, got '" + s + "'");
        overrides[s.substr(0, pos)] = s.substr(pos + 1);
    }
    return overrides;
}

int cmd_run(const GlobalOptions& global, const ctrl::RunRequest& request,
            const std::string& resume_id) {
    ctrl::Controller controller(global.controller());
    prov::Archive archive(global.archive_root);

    std::vector<ctrl::PipelineRun> runs;
    if (!resume_id.empty()) {
        auto run_json = controller.run_dir(resume_id) / "run.json";
        if (!std::filesystem::is_regular_file(run_json))
            throw Error(ErrorKind::Run, "no run '" + resume_id + "' to resume");
        auto j = nlohmann::json::parse(util::read_file(run_json));
        ctrl::RunRequest req;
        req.config_ref = j.value("config_ref", std::string());
        req.target_machines = {j.value("machine", std::string())};
        req.requester = j.value("requester", std::string("unknown"));
        req.schema_ref = j.value("schema", std::string());
        req.executor_kind = j.value("executor", std::string());
        if (j.contains("overrides"))
            for (const auto& [k, v] : j["overrides"].items())
                req.overrides[k] = v.get<std::string>();
        runs = controller.build_run(req);
        runs[0].run_id = resume_id;
    } else {
        runs = controller.build_run(request);
    }

    int exit_code = 0;
    for (auto& run : runs) {
        if (global.porcelain)
            std::printf("run\t%s\t%s\t%zu\n", run.run_id.c_str(), run.machine.c_str(),
                        run.instances.size());
        else
            std::printf("run %s on %s: %zu combinations, shared stages:%s\n", run.run_id.c_str(),
                        run.machine.c_str(), run.instances.size(), [&] {
                            std::string s;
                            for (const auto& st : run.split.shared) s += " " + st;
                            return s.empty() ? std::string(" none") : s;
                        }().c_str());
        auto report = controller.execute_run(run, archive);
        for (const auto& [ordinal, state] : report.combination_states) {
            auto rit = report.record_ids.find(ordinal);
            std::printf("combination\t%zu\t%s\t%s\n", ordinal, ctrl::to_string(state),
                        rit == report.record_ids.end() ? "-" : rit->second.c_str());
        }
        if (!global.porcelain)
            for (const auto& [stage, seconds] : report.stage_durations)
                std::printf("# %-12s %.3fs\n", stage.c_str(), seconds);
        if (!report.success()) exit_code = 2;
    }
    return exit_code;
}

int cmd_status(const GlobalOptions& global, const std::string& run_id) {
    ctrl::Controller controller(global.controller());
    auto snap = controller.status(run_id);
    for (const auto& [key, state] : snap.states)
        std::printf("%s\t%s\t%s\t%s\n", key.first.c_str(), key.second.c_str(),
                    ctrl::to_string(state), snap.details.at(key).c_str());
    return 0;
}

int cmd_list(const GlobalOptions& global) {
    ctrl::Controller controller(global.controller());
    for (const auto& id : controller.list_runs()) std::printf("%s\n", id.c_str());
    return 0;
}

int cmd_query(const GlobalOptions& global, const std::vector<std::string>& filters) {
    prov::Archive archive(global.archive_root);
    auto filter = prov::parse_filter(filters);
    auto annotation = [](const prov::BenchmarkRecord& rec, const char* key) {
        auto it = rec.annotations.find(key);
        return it == rec.annotations.end() ? std::string("-") : it->second;
    };
    if (!global.porcelain)
        std::printf("record_id\tmachine\tworkload\tnodes\tseed\trtf\n");
    for (const auto& id : archive.query(filter)) {
        auto rec = archive.fetch(id);
        std::printf("%s\t%s\t%s\t%s\t%s\t%s\n", id.c_str(), rec.metadata.machine.c_str(),
                    annotation(rec, "workload").c_str(), annotation(rec, "nodes").c_str(),
                    annotation(rec, "seed").c_str(), annotation(rec, "rtf").c_str());
    }
    return 0;
}

analysis::PlotStyle parse_style(const std::string& text) {
    if (text == "weak") return analysis::PlotStyle::Weak;
    if (text == "strong") return analysis::PlotStyle::Strong;
    throw Error(ErrorKind::Usage, "--style must be weak or strong, got '" + text + "'");
}

std::vector<analysis::ScalingPoint> points_from_records(const prov::Archive& archive,
                                                        const std::vector<std::string>& ids) {
    std::vector<analysis::ScalingPoint> points;
    std::string workload;
    for (const auto& id : ids) {
        auto rec = archive.fetch(id);
        auto workload_it = rec.annotations.find("workload");
        std::string this_workload =
            workload_it == rec.annotations.end() ? "unknown" : workload_it->second;
        if (points.empty())
            workload = this_workload;
        else if (workload != this_workload)
            throw Error(ErrorKind::Analysis, "records mix workloads '" + workload + "' and '" +
                                                 this_workload + "'");
        auto timers_it = rec.raw_files.find("timers.txt");
        if (timers_it == rec.raw_files.end())
            throw Error(ErrorKind::Analysis, "record '" + id + "' carries no timers.txt");
        analysis::ScalingPoint point;
        point.timers = analysis::parse_timers(timers_it->second);
        auto nodes_it = rec.annotations.find("nodes");
        if (nodes_it == rec.annotations.end())
            throw Error(ErrorKind::Analysis, "record '" + id + "' lacks a nodes annotation");
        point.resource_count = std::stoi(nodes_it->second);
        auto seed_it = rec.annotations.find("seed");
        point.seed = seed_it == rec.annotations.end() ? 0 : std::stol(seed_it->second);
        points.push_back(point);
    }
    return points;
}

struct AnalyzeArgs {
    std::vector<std::string> record_ids;
    std::vector<std::string> filters;
    std::string timers_file;
    int nodes = 1;
    long seed = 0;
    std::string out_dir = "analysis";
    std::string style = "weak";
};

int cmd_analyze(const GlobalOptions& global, const AnalyzeArgs& args, bool with_svg) {
    std::vector<analysis::ScalingPoint> points;
    if (!args.timers_file.empty()) {
        analysis::ScalingPoint point;
        point.timers = analysis::parse_timers(util::read_file(args.timers_file));
        point.resource_count = args.nodes;
        point.seed = args.seed;
        points.push_back(point);
    } else {
        prov::Archive archive(global.archive_root);
        std::vector<std::string> ids = args.record_ids;
        if (!args.filters.empty()) {
            auto matched = archive.query(prov::parse_filter(args.filters));
            ids.insert(ids.end(), matched.begin(), matched.end());
        }
        if (ids.empty()) {
            if (args.filters.empty())
                throw Error(ErrorKind::Usage, "no records given (pass ids, --filter, or --timers)");
            throw Error(ErrorKind::Analysis, "no records match the given filters");
        }
        points = points_from_records(archive, ids);
    }

    auto result = analysis::aggregate_seeds(points);
    auto files = analysis::emit_plot(result, parse_style(args.style), args.out_dir, "scaling",
                                     with_svg);
    if (!with_svg) std::fputs(analysis::render_table(result).c_str(), stdout);
    std::printf("%s\n", files.table.string().c_str());
    if (with_svg) std::printf("%s\n", files.svg.string().c_str());
    return 0;
}

std::string render_side(const std::optional<Entry>& side) {
    return side ? side->render() : "<absent>";
}

int cmd_diff(const GlobalOptions& global, const std::vector<std::string>& refs, bool records) {
    config::ResolvedConfig left, right;
    if (records) {
        prov::Archive archive(global.archive_root);
        left = config::ResolvedConfig::from_json(archive.fetch(refs[0]).resolved_config_json);
        right = config::ResolvedConfig::from_json(archive.fetch(refs[1]).resolved_config_json);
    } else {
        ctrl::Controller controller(global.controller());
        config::DocumentRepository repo(controller.options().config_root);
        left = config::resolve(repo.get(refs[0]), repo);
        right = config::resolve(repo.get(refs[1]), repo);
    }
    for (const auto& d : config::diff(left, right))
        std::printf("%s\t%s\t%s\n", d.key_path.c_str(), render_side(d.left).c_str(),
                    render_side(d.right).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"benchforge: configuration-driven benchmark orchestration"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--site", global.site_root, "site root (templates/, machines/, schemas/)")
        ->envname("BENCHFORGE_SITE");
    app.add_option("--config-root", global.config_root, "config document root")
        ->envname("BENCHFORGE_CONFIG_ROOT");
    app.add_option("--archive-root", global.archive_root, "benchmark archive root")
        ->envname("BENCHFORGE_ARCHIVE");
    app.add_option("--workdir", global.work_root, "run working directory root");
    app.add_flag("--porcelain", global.porcelain, "stable line-oriented output");

    // run
    auto* run = app.add_subcommand("run", "build and execute a benchmark run");
    ctrl::RunRequest request;
    std::vector<std::string> sets;
    std::string resume_id;
    run->add_option("--config", request.config_ref, "config document name or path");
    run->add_option("-m,--machine", request.target_machines, "target machine (repeatable)");
    run->add_option("--set", sets, "override config key (key=value, repeatable)");
    run->add_option("--executor", request.executor_kind, "job backend")
        ->check(CLI::IsMember({"local", "mock"}));
    run->add_option("--schema", request.schema_ref, "schema to validate against");
    run->add_option("--requester", request.requester, "who asked for this run");
    run->add_option("--resume", resume_id, "re-execute an interrupted run by id")
        ->excludes("--config");

    // status / list
    auto* status = app.add_subcommand("status", "show stage states of a run");
    std::string status_run_id;
    status->add_option("run_id", status_run_id, "run identifier")->required();
    auto* list = app.add_subcommand("list", "list runs in the working directory");

    // query
    auto* query = app.add_subcommand("query", "search the archive");
    std::vector<std::string> query_filters;
    query->add_option("--filter", query_filters,
                      "predicate like machine=mock-A or config.run.nodes>=2 (repeatable)");

    // analyze / plot
    AnalyzeArgs analyze_args, plot_args;
    auto add_analysis_options = [](CLI::App* cmd, AnalyzeArgs& args) {
        cmd->add_option("records", args.record_ids, "archive record ids");
        cmd->add_option("--filter", args.filters, "select records by predicate (repeatable)");
        cmd->add_option("--timers", args.timers_file, "analyze a local timer file instead");
        cmd->add_option("--nodes", args.nodes, "resource count for --timers");
        cmd->add_option("--seed", args.seed, "seed label for --timers");
        cmd->add_option("--out", args.out_dir, "output directory");
        cmd->add_option("--style", args.style, "weak or strong scaling")
            ->check(CLI::IsMember({"weak", "strong"}));
    };
    auto* analyze = app.add_subcommand("analyze", "aggregate timers into a table");
    add_analysis_options(analyze, analyze_args);
    auto* plot = app.add_subcommand("plot", "render the scaling plot (table + svg)");
    add_analysis_options(plot, plot_args);

    // diff
    auto* diff = app.add_subcommand("diff", "compare two configs key by key");
    std::vector<std::string> diff_refs;
    bool diff_records = false;
    diff->add_option("refs", diff_refs, "two config names or record ids")->expected(2);
    diff->add_flag("--records", diff_records, "refs are archive record ids");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) {
            request.overrides = parse_sets(sets);
            if (resume_id.empty() && request.config_ref.empty())
                throw Error(ErrorKind::Usage, "run needs --config (or --resume)");
            if (resume_id.empty() && request.target_machines.empty())
                throw Error(ErrorKind::Usage, "run needs at least one --machine");
            return cmd_run(global, request, resume_id);
        }
        if (status->parsed()) return cmd_status(global, status_run_id);
        if (list->parsed()) return cmd_list(global);
        if (query->parsed()) return cmd_query(global, query_filters);
        if (analyze->parsed()) return cmd_analyze(global, analyze_args, false);
        if (plot->parsed()) return cmd_analyze(global, plot_args, true);
        if (diff->parsed()) return cmd_diff(global, diff_refs, diff_records);
    } catch (const benchforge::Error& e) {
        std::fprintf(stderr, "benchforge: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "benchforge: %s\n", e.what());
        return 2;
    }
    return 0;
}
