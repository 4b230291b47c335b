#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "benchforge/config.hpp"
#include "benchforge/executor.hpp"
#include "benchforge/provenance.hpp"
#include "benchforge/templates.hpp"

namespace benchforge::ctrl {

// Stage names with built-in behavior: a successful Execution stage archives
// the combination's outputs; Analyze and Plot always run on the local host.
inline constexpr const char* kExecutionStage = "Execution";
inline constexpr const char* kAnalyzeStage = "Analyze";
inline constexpr const char* kPlotStage = "Plot";

// Slot column value for stages that run once per run instead of once per
// combination.
inline constexpr const char* kSharedSlot = "SHARED";

struct RunRequest {
    std::string config_ref;
    std::map<std::string, std::string> overrides;  // dotted key -> value text
    std::vector<std::string> target_machines;
    std::string requester = "unknown";
    std::string schema_ref;      // empty: validate against nothing
    std::string executor_kind;   // empty: machine default
};

enum class StageState { Pending, Running, Succeeded, Failed, Skipped };

const char* to_string(StageState state);
bool is_terminal(StageState state);

// (stage, slot) -> state; slot is kSharedSlot or the combination ordinal.
using StageKey = std::pair<std::string, std::string>;

struct PipelineRun {
    std::string run_id;
    std::string machine;
    std::string config_name;
    std::string requester;
    std::string executor_kind;
    RunRequest request;  // kept verbatim so a run can be rebuilt for resume
    config::ResolvedConfig resolved;
    std::vector<config::ParameterAxis> axes;
    templates::PipelineBlueprint blueprint;
    templates::StageSplit split;
    std::vector<templates::PipelineInstance> instances;
    exec::MachineProperties machine_props;
    std::map<StageKey, StageState> stage_states;  // all pending after build
};

struct StatusSnapshot {
    std::string run_id;
    std::map<StageKey, StageState> states;
    std::map<StageKey, std::string> details;
    // Every transition in event-log order, for ordering checks.
    std::vector<std::pair<StageKey, StageState>> history;
};

struct RunReport {
    std::string run_id;
    std::string machine;
    std::map<std::size_t, StageState> combination_states;  // terminal per ordinal
    std::map<std::size_t, std::string> record_ids;  // only combinations whose Execution succeeded
    std::vector<std::pair<std::string, double>> stage_durations;  // workflow order, seconds

    bool success() const;
};

struct ControllerOptions {
    std::filesystem::path site_root;    // templates/, machines/, schemas/
    std::filesystem::path config_root;  // defaults to <site_root>/configs
    std::filesystem::path work_root;    // runs/<run_id>/ live here
};

class Controller {
public:
    explicit Controller(ControllerOptions opts);

    const ControllerOptions& options() const { return opts_; }

    // One run per target machine: resolve (with request overrides as a
    // synthetic child document), expand the space, compose that machine's
    // blueprint, plan the split, and instantiate every combination.
    std::vector<PipelineRun> build_run(const RunRequest& req) const;

    // Drives the run to a terminal state: shared stages once and in order,
    // fanout stages once per live combination, Execution outputs archived.
    // If the run directory already holds an event log, previously succeeded
    // stages are skipped (resume).
    RunReport execute_run(PipelineRun& run, prov::Archive& archive) const;

    StatusSnapshot status(const std::string& run_id) const;
    std::vector<std::string> list_runs() const;

    std::filesystem::path run_dir(const std::string& run_id) const;

private:
    ControllerOptions opts_;
};

}  // namespace benchforge::ctrl
