#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "benchforge/analysis.hpp"
#include "benchforge/config.hpp"
#include "benchforge/controller.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/provenance.hpp"
#include "benchforge/workload.hpp"

namespace py = pybind11;
using namespace benchforge;

namespace {

py::object to_py(const Value& v) {
    switch (v.kind()) {
    case ValueKind::Bool: return py::bool_(v.as_bool());
    case ValueKind::Int: return py::int_(v.as_int());
    case ValueKind::Float: return py::float_(v.as_float());
    default: return py::str(v.as_string());
    }
}

py::object to_py(const Entry& e) {
    if (!e.is_list()) return to_py(e.scalar());
    py::list out;
    for (const auto& v : e.list()) out.append(to_py(v));
    return out;
}

py::dict resolve_config(const std::string& config_root, const std::string& ref) {
    config::DocumentRepository repo{std::filesystem::path(config_root)};
    auto rc = config::resolve(repo.get(ref), repo);
    py::dict entries, provenance;
    for (const auto& [key, entry] : rc.entries) entries[py::str(key)] = to_py(entry);
    for (const auto& [key, origin] : rc.provenance) provenance[py::str(key)] = py::str(origin);
    py::dict out;
    out["entries"] = entries;
    out["provenance"] = provenance;
    return out;
}

py::list expand_combinations(const std::string& config_root, const std::string& ref) {
    config::DocumentRepository repo{std::filesystem::path(config_root)};
    auto rc = config::resolve(repo.get(ref), repo);
    py::list out;
    for (const auto& combo : config::expand_parameter_space(rc)) {
        py::dict d;
        d["ordinal"] = combo.ordinal;
        py::dict assignments;
        for (const auto& [key, value] : combo.assignments)
            assignments[py::str(key)] = to_py(value);
        d["assignments"] = assignments;
        out.append(d);
    }
    return out;
}

py::dict run_pipeline(const std::string& site_root, const std::string& work_root,
                      const std::string& archive_root, const std::string& config_ref,
                      const std::string& machine,
                      const std::map<std::string, std::string>& overrides,
                      const std::string& executor, const std::string& requester,
                      const std::string& schema) {
    ctrl::ControllerOptions opts;
    opts.site_root = site_root;
    opts.config_root = std::filesystem::path(site_root) / "configs";
    opts.work_root = work_root;
    ctrl::Controller controller(opts);
    prov::Archive archive{std::filesystem::path(archive_root)};

    ctrl::RunRequest req;
    req.config_ref = config_ref;
    req.target_machines = {machine};
    req.overrides = overrides;
    req.executor_kind = executor;
    req.requester = requester;
    req.schema_ref = schema;
    auto runs = controller.build_run(req);
    auto report = controller.execute_run(runs.at(0), archive);

    py::dict combinations, records;
    for (const auto& [ordinal, state] : report.combination_states)
        combinations[py::int_(ordinal)] = py::str(ctrl::to_string(state));
    for (const auto& [ordinal, id] : report.record_ids) records[py::int_(ordinal)] = py::str(id);
    py::dict out;
    out["run_id"] = report.run_id;
    out["machine"] = report.machine;
    out["success"] = report.success();
    out["combinations"] = combinations;
    out["records"] = records;
    return out;
}

py::dict record_to_py(const prov::BenchmarkRecord& rec) {
    py::dict out;
    out["record_id"] = rec.record_id;
    out["run_id"] = rec.run_id;
    out["ordinal"] = rec.combination.ordinal;
    py::dict assignments;
    for (const auto& [key, value] : rec.combination.assignments)
        assignments[py::str(key)] = to_py(value);
    out["assignments"] = assignments;
    out["machine"] = rec.metadata.machine;
    out["timestamp"] = rec.metadata.timestamp;
    out["annotations"] = rec.annotations;
    py::list raw_names;
    for (const auto& [name, bytes] : rec.raw_files) raw_names.append(py::str(name));
    out["raw_files"] = raw_names;
    out["config_json"] = rec.resolved_config_json;
    return out;
}

py::dict analyze_archive(const std::string& archive_root,
                         const std::vector<std::string>& filters) {
    prov::Archive archive{std::filesystem::path(archive_root)};
    auto ids = archive.query(prov::parse_filter(filters));
    if (ids.empty()) throw Error(ErrorKind::Analysis, "no records match the given filters");
    std::vector<analysis::ScalingPoint> points;
    for (const auto& id : ids) {
        auto rec = archive.fetch(id);
        analysis::ScalingPoint p;
        p.timers = analysis::parse_timers(rec.raw_files.at("timers.txt"));
        p.resource_count = std::stoi(rec.annotations.at("nodes"));
        p.seed = std::stol(rec.annotations.at("seed"));
        points.push_back(p);
    }
    auto result = analysis::aggregate_seeds(points);
    py::dict per_count;
    for (const auto& [count, agg] : result.per_count) {
        py::dict d;
        d["n_seeds"] = agg.n_seeds;
        d["total_mean"] = agg.total.mean;
        d["total_sem"] = agg.total.sem;
        d["rtf_mean"] = agg.rtf.mean;
        d["rtf_sem"] = agg.rtf.sem;
        py::list fractions;
        for (double f : agg.fractions) fractions.append(f);
        d["fractions"] = fractions;
        per_count[py::int_(count)] = d;
    }
    py::dict out;
    out["per_count"] = per_count;
    out["table"] = analysis::render_table(result);
    return out;
}

py::dict run_demo(int ranks, int steps, std::uint64_t seed, double rate, int capacity,
                  bool use_table) {
    workload::DemoConfig cfg;
    cfg.exchange.ranks = ranks;
    cfg.exchange.initial_capacity = capacity;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.spike_rate = rate;
    cfg.use_table = use_table;
    auto result = workload::run_demo(cfg);
    py::dict out;
    out["spikes"] = result.spike_total;
    out["capacity"] = result.exchange.capacity;
    out["grow_count"] = result.exchange.grow_count;
    out["shrink_count"] = result.exchange.shrink_count;
    out["two_round_count"] = result.exchange.two_round_count;
    out["rtf"] = analysis::real_time_factor(result.timers);
    py::dict timers;
    timers["construction"] = result.timers.construction;
    timers["update"] = result.timers.update;
    timers["collocate"] = result.timers.collocate;
    timers["communicate"] = result.timers.communicate;
    timers["deliver"] = result.timers.deliver;
    timers["model_time"] = result.timers.model_time;
    out["timers"] = timers;
    py::list weights;
    for (const auto& rank_weights : result.weights) {
        py::list per_rank;
        for (double w : rank_weights) per_rank.append(w);
        weights.append(per_rank);
    }
    out["weights"] = weights;
    return out;
}

double py_stdp_update(double w, long delta_steps, double lambda, double alpha, double w_max,
                      double tau_plus, double tau_minus, double h_ms, std::size_t table_len) {
    workload::StdpParams params;
    params.lambda = lambda;
    params.alpha = alpha;
    params.w_max = w_max;
    params.tau_plus_ms = tau_plus;
    params.tau_minus_ms = tau_minus;
    params.h_ms = h_ms;
    params.validate();
    if (table_len == 0) return workload::stdp_update(w, delta_steps, params, nullptr);
    auto table = workload::build_exp_table(params, table_len);
    return workload::stdp_update(w, delta_steps, params, &table);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "benchforge core operations";

    py::register_exception<Error>(m, "BenchforgeError");

    m.def("resolve_config", &resolve_config, py::arg("config_root"), py::arg("ref"),
          "Resolve a config document chain to flat entries with provenance");
    m.def("expand_combinations", &expand_combinations, py::arg("config_root"), py::arg("ref"),
          "Enumerate the parameter combinations of a resolved config");
    m.def("run_pipeline", &run_pipeline, py::arg("site_root"), py::arg("work_root"),
          py::arg("archive_root"), py::arg("config"), py::arg("machine"),
          py::arg("overrides") = std::map<std::string, std::string>{},
          py::arg("executor") = std::string(), py::arg("requester") = std::string("python"),
          py::arg("schema") = std::string(),
          "Build and synchronously execute a benchmark run, archiving records");
    m.def("analyze_archive", &analyze_archive, py::arg("archive_root"),
          py::arg("filters") = std::vector<std::string>{},
          "Aggregate timer files of matching records per resource count");
    m.def("demo", &run_demo, py::arg("ranks") = 2, py::arg("steps") = 100, py::arg("seed") = 1,
          py::arg("rate") = 3.0, py::arg("capacity") = 8, py::arg("use_table") = true,
          "Run the packaged spike-exchange workload in-process");
    m.def("stdp_update", &py_stdp_update, py::arg("w"), py::arg("delta_steps"),
          py::arg("lambda_") = 0.1, py::arg("alpha") = 1.0, py::arg("w_max") = 1.0,
          py::arg("tau_plus") = 20.0, py::arg("tau_minus") = 20.0, py::arg("h_ms") = 0.1,
          py::arg("table_len") = 0, "One pair-based weight update, optionally table-driven");

    py::class_<prov::Archive>(m, "Archive")
        .def(py::init<std::filesystem::path>(), py::arg("root"))
        .def("list_ids", &prov::Archive::list_ids)
        .def("query",
             [](const prov::Archive& a, const std::vector<std::string>& filters) {
                 return a.query(prov::parse_filter(filters));
             },
             py::arg("filters") = std::vector<std::string>{})
        .def("fetch",
             [](const prov::Archive& a, const std::string& id) {
                 return record_to_py(a.fetch(id));
             },
             py::arg("id"))
        .def("fetch_raw",
             [](const prov::Archive& a, const std::string& id, const std::string& name) {
                 auto rec = a.fetch(id);
                 auto it = rec.raw_files.find(name);
                 if (it == rec.raw_files.end())
                     throw Error(ErrorKind::Archive,
                                 "record '" + id + "' has no raw file '" + name + "'");
                 return py::bytes(it->second);
             },
             py::arg("id"), py::arg("name"))
        .def("annotate",
             [](prov::Archive& a, const std::string& id, const std::string& key,
                const std::string& value) { return record_to_py(a.annotate(id, key, value)); },
             py::arg("id"), py::arg("key"), py::arg("value"));
}
