#include "benchforge/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

#include "benchforge/analysis.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge::ctrl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Run, msg); }
[[noreturn]] void fail_usage(const std::string& msg) { throw Error(ErrorKind::Usage, msg); }

StageState state_from_string(const std::string& text, bool& ok) {
    ok = true;
    if (text == "pending") return StageState::Pending;
    if (text == "running") return StageState::Running;
    if (text == "succeeded") return StageState::Succeeded;
    if (text == "failed") return StageState::Failed;
    if (text == "skipped") return StageState::Skipped;
    ok = false;
    return StageState::Pending;
}

std::string sanitize_detail(std::string detail) {
    for (char& c : detail)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return detail;
}

// Values on the command line are bare scalars or a bracketed list; quotes
// force string interpretation.
Value override_scalar(std::string text) {
    text = util::trim(text);
    if (text.size() >= 2 &&
        ((text.front() == '"' && text.back() == '"') ||
         (text.front() == '\'' && text.back() == '\'')))
        return Value(text.substr(1, text.size() - 2));
    return parse_scalar_text(text);
}

Entry parse_override_value(const std::string& key, const std::string& text) {
    std::string trimmed = util::trim(text);
    if (!trimmed.empty() && trimmed.front() == '[') {
        if (trimmed.back() != ']')
            fail_usage("override for '" + key + "' starts a list but never closes it");
        std::string inner = util::trim(trimmed.substr(1, trimmed.size() - 2));
        ValueList values;
        if (!inner.empty())
            for (const auto& part : util::split(inner, ',')) values.push_back(override_scalar(part));
        if (values.size() > 1)
            for (const auto& v : values)
                if (v.kind() != values.front().kind())
                    fail_usage("override list for '" + key + "' mixes value kinds");
        return Entry(std::move(values));
    }
    return Entry(override_scalar(trimmed));
}

struct EventLog {
    fs::path path;
    std::string run_id;

    void emit(const std::string& stage, const std::string& slot, StageState state,
              const std::string& detail) const {
        std::ofstream out(path, std::ios::app);
        if (!out) throw Error(ErrorKind::Io, "cannot append to " + path.string());
        out << util::utc_iso_now() << '\t' << run_id << '\t' << stage << '\t' << slot << '\t'
            << to_string(state) << '\t' << sanitize_detail(detail) << '\n';
    }
};

StatusSnapshot load_events(const fs::path& path, const std::string& run_id) {
    StatusSnapshot snap;
    snap.run_id = run_id;
    for (const auto& line : util::split(util::read_file(path), '\n')) {
        if (line.empty()) continue;
        auto fields = util::split(line, '\t');
        if (fields.size() < 5) continue;  // torn tail line from a dead process
        bool ok = false;
        StageState state = state_from_string(fields[4], ok);
        if (!ok || fields[1] != run_id) continue;
        StageKey key{fields[2], fields[3]};
        snap.states[key] = state;
        snap.details[key] = fields.size() > 5 ? fields[5] : "";
        snap.history.emplace_back(key, state);
    }
    return snap;
}

std::string slot_name(std::size_t ordinal) { return std::to_string(ordinal); }

bool is_shared_stage(const templates::StageSplit& split, const std::string& stage) {
    return std::find(split.shared.begin(), split.shared.end(), stage) != split.shared.end();
}

std::int64_t effective_int(const config::ResolvedConfig& rc,
                           const config::ParameterCombination& combo, const std::string& key,
                           std::int64_t fallback) {
    Entry scratch{Value(std::int64_t{0})};
    const Entry* e = config::effective_entry(rc, combo, key, scratch);
    if (!e || e->is_list()) return fallback;
    if (e->scalar().kind() == ValueKind::Int) return e->scalar().as_int();
    return fallback;
}

std::string effective_text(const config::ResolvedConfig& rc,
                           const config::ParameterCombination& combo, const std::string& key) {
    Entry scratch{Value(std::int64_t{0})};
    const Entry* e = config::effective_entry(rc, combo, key, scratch);
    if (!e || e->is_list()) return "";
    return e->scalar().render();
}

long resolved_timeout_ms(const config::ResolvedConfig& rc) {
    return static_cast<long>(rc.get_int("pipeline.stage_timeout_s", 300)) * 1000;
}

// Collects the combination's outputs, enriches them with metadata, and
// stores the record.  Returns the assigned id.
std::string archive_execution(const PipelineRun& run, std::size_t ordinal, prov::Archive& archive,
                              const fs::path& run_dir) {
    const auto& inst = run.instances[ordinal];
    prov::BenchmarkRecord rec;
    rec.run_id = run.run_id;
    rec.combination = inst.combination;
    rec.resolved_config_json = run.resolved.to_json();

    fs::path work = run_dir / "work" / std::to_string(ordinal);
    if (fs::is_directory(work))
        for (const auto& entry : fs::directory_iterator(work)) {
            if (!entry.is_regular_file()) continue;
            std::string name = entry.path().filename().string();
            if (name.empty() || name.front() == '.') continue;
            rec.raw_files[name] = util::read_file(entry.path());
        }
    for (const char* log_name : {"stdout.log", "stderr.log"}) {
        fs::path p = run_dir / "artifacts" / kExecutionStage / std::to_string(ordinal) / log_name;
        if (fs::is_regular_file(p)) rec.raw_files[log_name] = util::read_file(p);
    }

    prov::CollectContext ctx;
    ctx.machine = run.machine;
    ctx.node_class = run.machine_props.class_for_stage(kExecutionStage);
    ctx.env_allowlist = run.machine_props.env_allowlist;
    ctx.software_versions["executor"] = run.executor_kind;
    rec.metadata = prov::collect_metadata(ctx);

    rec.annotations["requester"] = run.requester;
    rec.annotations["config_name"] = run.config_name;
    rec.annotations["workload"] = run.resolved.get_string("model.name", "unknown");
    if (auto nodes = effective_text(run.resolved, inst.combination, "run.nodes"); !nodes.empty())
        rec.annotations["nodes"] = nodes;
    if (auto seed = effective_text(run.resolved, inst.combination, "run.seed"); !seed.empty())
        rec.annotations["seed"] = seed;
    auto timers_it = rec.raw_files.find("timers.txt");
    if (timers_it != rec.raw_files.end()) {
        try {
            auto timers = analysis::parse_timers(timers_it->second);
            rec.annotations["rtf"] = util::render_double(analysis::real_time_factor(timers));
        } catch (const Error&) {
            // not the demo timer format; archive without the shortcut
        }
    }
    return archive.store(rec);
}

exec::MachineProperties local_side_machine(const exec::MachineProperties& props) {
    exec::MachineProperties m;
    m.name = props.name;
    m.default_executor = "local";
    m.env_allowlist = props.env_allowlist;
    m.node_classes["local"] = exec::NodeClass{4, 1 << 20, 0, true};
    m.default_class = "local";
    return m;
}

}  // namespace

const char* to_string(StageState state) {
    switch (state) {
    case StageState::Pending: return "pending";
    case StageState::Running: return "running";
    case StageState::Succeeded: return "succeeded";
    case StageState::Failed: return "failed";
    case StageState::Skipped: return "skipped";
    }
    return "?";
}

bool is_terminal(StageState state) {
    return state == StageState::Succeeded || state == StageState::Failed ||
           state == StageState::Skipped;
}

bool RunReport::success() const {
    return std::all_of(combination_states.begin(), combination_states.end(),
                       [](const auto& kv) { return kv.second == StageState::Succeeded; });
}

Controller::Controller(ControllerOptions opts) : opts_(std::move(opts)) {
    if (opts_.site_root.empty()) throw Error(ErrorKind::Usage, "site root not set");
    if (opts_.config_root.empty()) opts_.config_root = opts_.site_root / "configs";
    if (opts_.work_root.empty()) opts_.work_root = "benchforge-work";
}

fs::path Controller::run_dir(const std::string& run_id) const {
    if (run_id.empty() || run_id.front() == '.' || run_id.find('/') != std::string::npos)
        fail("malformed run id '" + run_id + "'");
    return opts_.work_root / "runs" / run_id;
}

std::vector<PipelineRun> Controller::build_run(const RunRequest& req) const {
    if (req.target_machines.empty()) fail_usage("at least one target machine is required");
    if (req.config_ref.empty()) fail_usage("a config reference is required");

    config::DocumentRepository repo(opts_.config_root);
    const config::ConfigDocument& base = repo.get(req.config_ref);

    config::Schema schema = config::Schema::none();
    if (!req.schema_ref.empty()) {
        fs::path candidates[] = {
            fs::path(req.schema_ref),
            opts_.site_root / "schemas" / req.schema_ref,
            opts_.site_root / "schemas" / (req.schema_ref + ".yaml"),
        };
        bool found = false;
        for (const auto& p : candidates)
            if (fs::is_regular_file(p)) {
                schema = config::load_schema(p);
                found = true;
                break;
            }
        if (!found)
            throw Error(ErrorKind::Schema, "schema '" + req.schema_ref + "' not found");
    }

    config::ResolvedConfig resolved;
    if (req.overrides.empty()) {
        resolved = config::resolve(base, repo, schema);
    } else {
        config::ConfigDocument doc;
        doc.name = "request-override";
        doc.parent = req.config_ref;
        for (const auto& [key, text] : req.overrides) {
            if (!valid_key_path(key))
                fail_usage("override key '" + key + "' is not a dotted path");
            doc.entries.emplace(key, parse_override_value(key, text));
        }
        resolved = config::resolve(doc, repo, schema);
    }

    auto axes = config::parameter_axes(resolved);
    auto combos = config::expand_parameter_space(resolved);
    std::string workflow = resolved.get_string("pipeline.workflow", "benchmark");
    std::string platform = resolved.get_string("pipeline.platform", "shell");

    std::vector<PipelineRun> runs;
    for (const auto& machine : req.target_machines) {
        PipelineRun run;
        run.machine = machine;
        run.config_name = base.name;
        run.requester = req.requester;
        run.request = req;
        run.request.target_machines = {machine};
        run.resolved = resolved;
        run.axes = axes;
        run.machine_props = exec::load_machine_properties(opts_.site_root, machine);
        run.executor_kind =
            req.executor_kind.empty() ? run.machine_props.default_executor : req.executor_kind;

        auto set = templates::load_template_set(opts_.site_root, workflow, platform, machine);
        run.blueprint = templates::compose_blueprint(set);
        run.split = templates::plan_stage_split(run.blueprint, axes);
        // Records are minted per combination when Execution succeeds, so it can
        // never sit in the shared prefix even if no stage references an axis key.
        auto cut = std::find(run.split.shared.begin(), run.split.shared.end(), kExecutionStage);
        if (cut != run.split.shared.end()) {
            run.split.fanout.insert(run.split.fanout.begin(), cut, run.split.shared.end());
            run.split.shared.erase(cut, run.split.shared.end());
        }
        for (const auto& combo : combos)
            run.instances.push_back(templates::instantiate(run.blueprint, resolved, combo));

        for (const auto& stage : run.blueprint.stages) {
            if (run.machine_props.stage_needs_internet(stage)) {
                std::string cls = run.machine_props.class_for_stage(stage);
                if (!run.machine_props.node_class(cls).internet_access)
                    throw Error(ErrorKind::Machine,
                                "stage '" + stage + "' needs internet access but class '" + cls +
                                    "' on machine '" + machine + "' has none");
            }
            if (is_shared_stage(run.split, stage)) {
                run.stage_states[{stage, kSharedSlot}] = StageState::Pending;
            } else {
                for (const auto& inst : run.instances)
                    run.stage_states[{stage, slot_name(inst.ordinal)}] = StageState::Pending;
            }
        }

        run.run_id = util::utc_compact_stamp(std::chrono::system_clock::now()) + "-" + machine +
                     "-" + util::random_base32(4);
        runs.push_back(std::move(run));
    }
    return runs;
}

RunReport Controller::execute_run(PipelineRun& run, prov::Archive& archive) const {
    const fs::path dir = run_dir(run.run_id);
    util::ensure_dir(dir / "instances");
    util::ensure_dir(dir / "artifacts");
    util::ensure_dir(dir / "work" / "shared");
    for (const auto& inst : run.instances) {
        util::ensure_dir(dir / "work" / slot_name(inst.ordinal));
        util::write_file_atomic(dir / "instances" / (slot_name(inst.ordinal) + ".txt"),
                                inst.serialize());
    }

    json rj;
    rj["run_id"] = run.run_id;
    rj["machine"] = run.machine;
    rj["config"] = run.config_name;
    rj["config_ref"] = run.request.config_ref;
    rj["overrides"] = run.request.overrides;
    rj["schema"] = run.request.schema_ref;
    rj["requester"] = run.requester;
    rj["executor"] = run.executor_kind;
    rj["combinations"] = run.instances.size();
    rj["stages"] = run.blueprint.stages;
    rj["shared_stages"] = run.split.shared;
    util::write_file_atomic(dir / "run.json", rj.dump(2) + "\n");

    EventLog log{dir / "events.log", run.run_id};
    RunReport report;
    report.run_id = run.run_id;
    report.machine = run.machine;

    const bool resuming = fs::is_regular_file(log.path) && fs::file_size(log.path) > 0;
    if (resuming) {
        StatusSnapshot prior = load_events(log.path, run.run_id);
        for (auto& [key, state] : run.stage_states) {
            auto it = prior.states.find(key);
            if (it == prior.states.end()) continue;
            if (it->second == StageState::Succeeded) {
                state = StageState::Succeeded;
                if (key.first == kExecutionStage && key.second != kSharedSlot) {
                    const std::string& detail = prior.details[key];
                    auto pos = detail.find("record=");
                    if (pos != std::string::npos)
                        report.record_ids[std::stoul(key.second)] = detail.substr(pos + 7);
                }
            }
        }
    } else {
        // Persist the full pending state machine up front so status readers
        // see every stage/slot from the start.
        for (const auto& stage : run.blueprint.stages) {
            if (is_shared_stage(run.split, stage)) {
                log.emit(stage, kSharedSlot, StageState::Pending, "");
            } else {
                for (const auto& inst : run.instances)
                    log.emit(stage, slot_name(inst.ordinal), StageState::Pending, "");
            }
        }
    }

    auto set_state = [&](const std::string& stage, const std::string& slot, StageState state,
                         const std::string& detail) {
        run.stage_states[{stage, slot}] = state;
        log.emit(stage, slot, state, detail);
    };

    auto executor = exec::make_executor(run.executor_kind, run.machine_props);
    std::unique_ptr<exec::Executor> local_side;
    auto target_for = [&](const std::string& stage) -> exec::Executor& {
        if (stage == kAnalyzeStage || stage == kPlotStage) {
            if (!local_side) local_side = exec::make_local_executor(local_side_machine(run.machine_props));
            return *local_side;
        }
        return *executor;
    };

    const fs::path shared_dir = fs::absolute(dir / "work" / "shared");
    const fs::path exe_dir = util::current_executable().parent_path();
    auto job_env = [&](const std::string& ordinal_slot, const std::string& record_id) {
        std::map<std::string, std::string> env;
        env["BENCHFORGE_RUN_ID"] = run.run_id;
        env["BENCHFORGE_SHARED_DIR"] = shared_dir.string();
        if (!ordinal_slot.empty()) env["BENCHFORGE_ORDINAL"] = ordinal_slot;
        if (!record_id.empty()) env["BENCHFORGE_RECORD_ID"] = record_id;
        const char* base_path = std::getenv("PATH");
        std::string path = base_path ? base_path : "/usr/bin:/bin";
        if (!exe_dir.empty()) path = exe_dir.string() + ":" + path;
        env["PATH"] = path;
        return env;
    };

    const auto stage_timeout =
        std::chrono::milliseconds(resolved_timeout_ms(run.resolved));
    const int retries = static_cast<int>(run.resolved.get_int("pipeline.retries", 0));

    bool shared_failed = false;
    std::set<std::size_t> dead;

    auto describe = [](const exec::JobStatus& st) {
        if (st.state == exec::JobState::TimedOut)
            return st.detail.empty() ? std::string("timeout") : st.detail;
        if (st.state == exec::JobState::Cancelled) return std::string("cancelled");
        if (!st.detail.empty()) return st.detail;
        if (st.exit_code) return "exit " + std::to_string(*st.exit_code);
        return std::string();
    };

    for (const auto& stage : run.blueprint.stages) {
        const bool shared = is_shared_stage(run.split, stage);
        const auto t0 = std::chrono::steady_clock::now();

        if (shared) {
            StageKey key{stage, kSharedSlot};
            StageState cur = run.stage_states[key];
            if (cur == StageState::Succeeded) {
                // resumed: nothing to do
            } else if (shared_failed) {
                set_state(stage, kSharedSlot, StageState::Skipped, "earlier shared stage failed");
            } else {
                const auto& commands = run.instances.front().stage_commands.at(stage);
                set_state(stage, kSharedSlot, StageState::Running, "");
                if (commands.empty()) {
                    set_state(stage, kSharedSlot, StageState::Succeeded, "no commands");
                } else {
                    exec::JobRequest jreq;
                    jreq.commands = commands;
                    jreq.working_dir = dir / "work" / "shared";
                    jreq.output_dir = dir / "artifacts" / stage / "shared";
                    jreq.env = job_env("", "");
                    jreq.label = stage + "/shared";
                    jreq.timeout = stage_timeout;
                    exec::Executor& target = target_for(stage);
                    if (&target == executor.get())
                        jreq.node_class = run.machine_props.class_for_stage(stage);
                    auto status = target.wait_all({target.submit(jreq)}, stage_timeout +
                                                  std::chrono::milliseconds(2000))[0];
                    if (status.state == exec::JobState::Succeeded) {
                        set_state(stage, kSharedSlot, StageState::Succeeded, "");
                    } else {
                        set_state(stage, kSharedSlot, StageState::Failed, describe(status));
                        shared_failed = true;
                    }
                }
            }
        } else {
            // fanout: one job per live combination, a barrier per stage
            std::vector<std::size_t> live;
            for (const auto& inst : run.instances) {
                StageKey key{stage, slot_name(inst.ordinal)};
                StageState cur = run.stage_states[key];
                if (cur == StageState::Succeeded) continue;
                if (shared_failed) {
                    set_state(stage, key.second, StageState::Skipped, "shared stage failed");
                } else if (dead.count(inst.ordinal)) {
                    set_state(stage, key.second, StageState::Skipped,
                              "combination failed earlier");
                } else {
                    live.push_back(inst.ordinal);
                }
            }

            exec::Executor& target = target_for(stage);
            std::map<std::size_t, exec::JobStatus> outcomes;
            std::vector<std::size_t> attempt = live;
            for (int round = 0; round <= retries && !attempt.empty(); ++round) {
                std::vector<exec::JobHandle> handles;
                std::vector<std::size_t> submitted;
                for (std::size_t ordinal : attempt) {
                    const auto& inst = run.instances[ordinal];
                    const auto& commands = inst.stage_commands.at(stage);
                    std::string detail = round ? "retry " + std::to_string(round) + "/" +
                                                     std::to_string(retries)
                                               : "";
                    set_state(stage, slot_name(ordinal), StageState::Running, detail);
                    if (commands.empty()) {
                        exec::JobStatus empty;
                        empty.state = exec::JobState::Succeeded;
                        empty.exit_code = 0;
                        outcomes[ordinal] = empty;
                        continue;
                    }
                    exec::JobRequest jreq;
                    jreq.commands = commands;
                    jreq.working_dir = dir / "work" / slot_name(ordinal);
                    jreq.output_dir = dir / "artifacts" / stage / slot_name(ordinal);
                    std::string rec_id;
                    auto rit = report.record_ids.find(ordinal);
                    if (rit != report.record_ids.end()) rec_id = rit->second;
                    jreq.env = job_env(slot_name(ordinal), rec_id);
                    jreq.label = stage + "/" + slot_name(ordinal);
                    jreq.timeout = stage_timeout;
                    if (&target == executor.get()) {
                        jreq.node_class = run.machine_props.class_for_stage(stage);
                        jreq.resources.nodes = static_cast<int>(
                            effective_int(run.resolved, inst.combination, "run.nodes", 1));
                        jreq.resources.tasks_per_node = static_cast<int>(
                            effective_int(run.resolved, inst.combination, "run.tasks_per_node", 1));
                        jreq.resources.threads_per_task = static_cast<int>(effective_int(
                            run.resolved, inst.combination, "run.threads_per_task", 1));
                    }
                    handles.push_back(target.submit(jreq));
                    submitted.push_back(ordinal);
                }
                auto statuses = target.wait_all(
                    handles, stage_timeout + std::chrono::milliseconds(2000));
                std::vector<std::size_t> failed_now;
                for (std::size_t i = 0; i < submitted.size(); ++i) {
                    outcomes[submitted[i]] = statuses[i];
                    if (statuses[i].state != exec::JobState::Succeeded)
                        failed_now.push_back(submitted[i]);
                }
                attempt = std::move(failed_now);
            }

            for (std::size_t ordinal : live) {
                const auto& status = outcomes.at(ordinal);
                if (status.state == exec::JobState::Succeeded) {
                    std::string detail;
                    if (stage == kExecutionStage) {
                        std::string id = archive_execution(run, ordinal, archive, dir);
                        report.record_ids[ordinal] = id;
                        detail = "record=" + id;
                    }
                    set_state(stage, slot_name(ordinal), StageState::Succeeded, detail);
                } else {
                    set_state(stage, slot_name(ordinal), StageState::Failed, describe(status));
                    dead.insert(ordinal);
                }
            }
        }

        report.stage_durations.emplace_back(
            stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    for (const auto& inst : run.instances) {
        StageState worst = StageState::Succeeded;
        for (const auto& stage : run.split.fanout) {
            StageState s = run.stage_states[{stage, slot_name(inst.ordinal)}];
            if (s == StageState::Failed) {
                worst = StageState::Failed;
                break;
            }
            if (s == StageState::Skipped) worst = StageState::Skipped;
        }
        if (run.split.fanout.empty() && shared_failed) worst = StageState::Skipped;
        report.combination_states[inst.ordinal] = worst;
    }
    return report;
}

StatusSnapshot Controller::status(const std::string& run_id) const {
    fs::path path = run_dir(run_id) / "events.log";
    if (!fs::is_regular_file(path)) fail("unknown run '" + run_id + "'");
    return load_events(path, run_id);
}

std::vector<std::string> Controller::list_runs() const {
    std::vector<std::string> ids;
    fs::path base = opts_.work_root / "runs";
    if (!fs::is_directory(base)) return ids;
    for (const auto& entry : fs::directory_iterator(base))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace benchforge::ctrl
