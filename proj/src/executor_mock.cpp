#include <algorithm>
#include <mutex>

#include "benchforge/errors.hpp"
#include "benchforge/executor.hpp"
#include "benchforge/util.hpp"

namespace benchforge::exec {

namespace {

struct MockJob {
    std::string id;
    JobRequest req;
    std::string klass;
    JobState state = JobState::Queued;
    long ready_tick = 0;   // earliest tick the scheduler may start it
    long finish_tick = -1;
    CommandOutcome outcome;
    std::string error;
    JobStatus status;
};

}  // namespace

struct MockBatchExecutor::Impl {
    MachineProperties props;
    mutable std::mutex mu;
    long clock = 0;
    std::vector<std::unique_ptr<MockJob>> jobs;  // submission order == FIFO order
    std::map<std::string, int> running;
    std::map<std::string, int> peak;
    std::vector<std::string> log;
    long next_id = 0;

    MockJob* find(const std::string& id) {
        for (auto& j : jobs)
            if (j->id == id) return j.get();
        throw Error(ErrorKind::Executor, "unknown job '" + id + "'");
    }

    void log_transition(const MockJob& job) {
        log.push_back("t=" + std::to_string(clock) + " job=" + job.id + " class=" + job.klass +
                      " state=" + to_string(job.state));
    }

    void finalize(MockJob& job) {
        if (!job.error.empty()) {
            job.state = JobState::Failed;
            job.status.detail = job.error;
        } else if (job.outcome.timed_out) {
            job.state = JobState::TimedOut;
            job.status.detail = "job timeout";
        } else if (job.outcome.exit_code != 0) {
            job.state = JobState::Failed;
            job.status.exit_code = job.outcome.exit_code;
            job.status.detail = "command " + std::to_string(job.outcome.failed_command) +
                                " exited with " + std::to_string(job.outcome.exit_code);
        } else {
            job.state = JobState::Succeeded;
            job.status.exit_code = 0;
        }
        job.status.state = job.state;
    }

    // One scheduler step: advance the logical clock, retire jobs whose
    // runtime elapsed, then dispatch eligible queued jobs in submission
    // order while their class has capacity.  Commands execute for real at
    // dispatch; the simulated runtime is one tick regardless.
    void tick() {
        ++clock;
        for (auto& jp : jobs) {
            MockJob& job = *jp;
            if (job.state == JobState::Running && job.finish_tick <= clock) {
                --running[job.klass];
                finalize(job);
                log_transition(job);
            }
        }
        for (auto& jp : jobs) {
            MockJob& job = *jp;
            if (job.state != JobState::Queued || job.ready_tick > clock) continue;
            int capacity = props.node_class(job.klass).capacity;
            if (running[job.klass] >= capacity) continue;
            ++running[job.klass];
            peak[job.klass] = std::max(peak[job.klass], running[job.klass]);
            job.state = JobState::Running;
            job.status.state = JobState::Running;
            job.finish_tick = clock + 1;
            log_transition(job);
            run_now(job);
        }
    }

    void run_now(MockJob& job) {
        using clock_t = std::chrono::steady_clock;
        auto deadline = job.req.timeout.count() > 0 ? clock_t::now() + job.req.timeout
                                                    : clock_t::time_point{};
        try {
            job.outcome = run_command_list(job.req.commands, job.req.working_dir,
                                           build_job_env(props, job.req.env),
                                           job.status.stdout_path, job.status.stderr_path,
                                           deadline, nullptr);
        } catch (const Error& e) {
            job.error = e.what();
        }
    }
};

MockBatchExecutor::MockBatchExecutor(MachineProperties machine) : impl_(new Impl) {
    impl_->props = std::move(machine);
}

MockBatchExecutor::~MockBatchExecutor() = default;

JobHandle MockBatchExecutor::submit(const JobRequest& request) {
    std::string klass = request.node_class.empty() ? impl_->props.default_class
                                                   : request.node_class;
    const NodeClass& nc = impl_->props.node_class(klass);
    if (request.resources.nodes < 1)
        throw Error(ErrorKind::Executor, "job needs at least one node");
    if (request.resources.nodes > nc.max_nodes)
        throw Error(ErrorKind::Executor, "job wants " + std::to_string(request.resources.nodes) +
                                             " nodes but class '" + klass + "' allows " +
                                             std::to_string(nc.max_nodes));

    auto job = std::make_unique<MockJob>();
    job->req = request;
    job->klass = klass;
    util::ensure_dir(request.working_dir);
    auto out_dir = request.output_dir.empty() ? request.working_dir : request.output_dir;
    util::ensure_dir(out_dir);
    job->status.stdout_path = out_dir / "stdout.log";
    job->status.stderr_path = out_dir / "stderr.log";

    std::lock_guard lock(impl_->mu);
    job->id = "mock-" + std::to_string(++impl_->next_id);
    // one scheduling tick is unavoidable; the class delay adds to it
    job->ready_tick = impl_->clock + 1 + nc.queue_delay_ticks;
    impl_->log_transition(*job);
    impl_->jobs.push_back(std::move(job));
    return {impl_->jobs.back()->id};
}

JobStatus MockBatchExecutor::poll(const JobHandle& handle) {
    std::lock_guard lock(impl_->mu);
    impl_->tick();
    return impl_->find(handle.id)->status;
}

std::vector<JobStatus> MockBatchExecutor::wait_all(const std::vector<JobHandle>& handles,
                                                   std::chrono::milliseconds timeout) {
    using wall = std::chrono::steady_clock;
    auto deadline = timeout.count() > 0 ? wall::now() + timeout : wall::time_point::max();
    std::lock_guard lock(impl_->mu);
    while (true) {
        bool all_done = true;
        for (const auto& h : handles)
            if (!is_terminal(impl_->find(h.id)->state)) {
                all_done = false;
                break;
            }
        if (all_done) break;
        if (wall::now() >= deadline) {
            for (const auto& h : handles) {
                MockJob* job = impl_->find(h.id);
                if (is_terminal(job->state)) continue;
                if (job->state == JobState::Running) --impl_->running[job->klass];
                job->state = JobState::TimedOut;
                job->status.state = job->state;
                job->status.detail = "wait_all timeout";
                impl_->log_transition(*job);
            }
            break;
        }
        impl_->tick();
    }
    std::vector<JobStatus> out;
    out.reserve(handles.size());
    for (const auto& h : handles) out.push_back(impl_->find(h.id)->status);
    return out;
}

JobStatus MockBatchExecutor::cancel(const JobHandle& handle) {
    std::lock_guard lock(impl_->mu);
    MockJob* job = impl_->find(handle.id);
    if (job->state == JobState::Queued) {
        job->state = JobState::Cancelled;
        job->status.state = job->state;
        job->status.detail = "cancelled while queued";
        impl_->log_transition(*job);
    } else if (job->state == JobState::Running) {
        --impl_->running[job->klass];
        job->state = JobState::Cancelled;
        job->status.state = job->state;
        job->status.detail = "cancelled after dispatch";
        impl_->log_transition(*job);
    }
    return job->status;
}

const MachineProperties& MockBatchExecutor::machine() const { return impl_->props; }

std::vector<std::string> MockBatchExecutor::transition_log() const {
    std::lock_guard lock(impl_->mu);
    return impl_->log;
}

long MockBatchExecutor::current_tick() const {
    std::lock_guard lock(impl_->mu);
    return impl_->clock;
}

std::map<std::string, int> MockBatchExecutor::peak_running() const {
    std::lock_guard lock(impl_->mu);
    return impl_->peak;
}

}  // namespace benchforge::exec
