#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace benchforge::exec {

struct Resources {
    int nodes = 1;
    int tasks_per_node = 1;
    int threads_per_task = 1;
};

// A job is a command list executed front to back in one working directory;
// the first failing command fails the job.
struct JobRequest {
    std::vector<std::string> commands;
    Resources resources;
    std::filesystem::path working_dir;
    std::filesystem::path output_dir;          // stdout/stderr capture location
    std::map<std::string, std::string> env;    // overlaid on the allowlisted base
    std::string node_class;                    // empty = machine default
    std::string label;                         // free-form, for logs
    std::chrono::milliseconds timeout{0};      // 0 = no per-job limit
};

enum class JobState { Queued, Running, Succeeded, Failed, Cancelled, TimedOut };

const char* to_string(JobState state);
bool is_terminal(JobState state);

struct JobHandle {
    std::string id;
};

struct JobStatus {
    JobState state = JobState::Queued;
    std::optional<int> exit_code;  // set only for Succeeded/Failed
    std::filesystem::path stdout_path;
    std::filesystem::path stderr_path;
    std::string detail;            // failing command, timeout note, ...
};

// --- machine properties -----------------------------------------------------

struct NodeClass {
    int capacity = 1;            // jobs running concurrently
    int max_nodes = 1;           // per-job resource ceiling
    int queue_delay_ticks = 0;   // scheduling latency (mock backend)
    bool internet_access = false;
};

struct MachineProperties {
    std::string name;
    std::string default_executor = "local";      // "local" or "mock"
    std::vector<std::string> env_allowlist;      // variables jobs inherit
    std::map<std::string, NodeClass> node_classes;
    std::string default_class;
    std::map<std::string, std::string> stage_classes;   // stage -> node class
    std::vector<std::string> internet_stages = {"Preparation"};  // stages needing internet

    const NodeClass& node_class(const std::string& name) const;
    std::string class_for_stage(const std::string& stage) const;
    bool stage_needs_internet(const std::string& stage) const;
};

// Loads `<site_root>/machines/<name>` (plain or .yaml).
MachineProperties load_machine_properties(const std::filesystem::path& site_root,
                                          const std::string& name);
MachineProperties parse_machine_properties(const std::string& yaml_text, const std::string& name);

// The environment a job sees: allowlisted variables from the current
// process, then the request overlay on top.
std::map<std::string, std::string> build_job_env(const MachineProperties& machine,
                                                 const std::map<std::string, std::string>& overlay);

// --- executor interface ------------------------------------------------------

class Executor {
public:
    virtual ~Executor() = default;

    virtual JobHandle submit(const JobRequest& request) = 0;
    virtual JobStatus poll(const JobHandle& handle) = 0;
    // Blocks until all handles are terminal or the timeout elapses; jobs
    // still live at the deadline are cancelled and reported timed_out.
    virtual std::vector<JobStatus> wait_all(const std::vector<JobHandle>& handles,
                                            std::chrono::milliseconds timeout) = 0;
    virtual JobStatus cancel(const JobHandle& handle) = 0;
    virtual const MachineProperties& machine() const = 0;
    virtual std::string kind() const = 0;
};

// Runs jobs as local process groups, up to `capacity` concurrently per node
// class, capturing stdout/stderr to files.
std::unique_ptr<Executor> make_local_executor(MachineProperties machine);

// Deterministic batch-system model driven by a logical clock: submissions
// sit in a per-class FIFO queue for `queue_delay_ticks`, start when capacity
// allows, and finish one tick later.  Commands still execute for real.
// Every poll()/wait_all() iteration advances the clock by one tick.
class MockBatchExecutor : public Executor {
public:
    explicit MockBatchExecutor(MachineProperties machine);
    ~MockBatchExecutor() override;

    JobHandle submit(const JobRequest& request) override;
    JobStatus poll(const JobHandle& handle) override;
    std::vector<JobStatus> wait_all(const std::vector<JobHandle>& handles,
                                    std::chrono::milliseconds timeout) override;
    JobStatus cancel(const JobHandle& handle) override;
    const MachineProperties& machine() const override;
    std::string kind() const override { return "mock"; }

    // Scheduling trace: one line per state transition, byte-deterministic
    // for a fixed submission sequence.
    std::vector<std::string> transition_log() const;
    long current_tick() const;
    // Highest number of simultaneously running jobs seen per node class.
    std::map<std::string, int> peak_running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::unique_ptr<Executor> make_executor(const std::string& kind, MachineProperties machine);

// --- internal helper shared by the backends ---------------------------------

struct CommandOutcome {
    int exit_code = 0;
    int failed_command = -1;  // index of the first failing command
    bool timed_out = false;
    bool cancelled = false;
};

// Runs commands sequentially through /bin/sh -c in `working_dir` with
// exactly `env` as environment, appending stdout/stderr to the given files.
// Stops at the first failure.  `cancel_flag` (may be null) requests
// termination; `deadline` (zero = none) enforces a wall-clock limit.
CommandOutcome run_command_list(const std::vector<std::string>& commands,
                                const std::filesystem::path& working_dir,
                                const std::map<std::string, std::string>& env,
                                const std::filesystem::path& stdout_file,
                                const std::filesystem::path& stderr_file,
                                std::chrono::steady_clock::time_point deadline,
                                const std::atomic<bool>* cancel_flag);

}  // namespace benchforge::exec
