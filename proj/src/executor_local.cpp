#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "benchforge/errors.hpp"
#include "benchforge/executor.hpp"
#include "benchforge/util.hpp"

namespace benchforge::exec {

namespace {

class LocalExecutor final : public Executor {
public:
    explicit LocalExecutor(MachineProperties machine) : props_(std::move(machine)) {}

    ~LocalExecutor() override {
        {
            std::unique_lock lock(mu_);
            shutdown_ = true;
            for (auto& [id, job] : jobs_)
                if (!is_terminal(job->status.state)) job->cancel.store(true);
            for (auto& [klass, q] : queues_) q.clear();
        }
        cv_.notify_all();
        for (auto& [id, job] : jobs_)
            if (job->worker.joinable()) job->worker.join();
    }

    JobHandle submit(const JobRequest& request) override {
        std::string klass = request.node_class.empty() ? props_.default_class : request.node_class;
        const NodeClass& nc = props_.node_class(klass);
        if (request.resources.nodes < 1)
            throw Error(ErrorKind::Executor, "job needs at least one node");
        if (request.resources.nodes > nc.max_nodes)
            throw Error(ErrorKind::Executor,
                        "job wants " + std::to_string(request.resources.nodes) +
                            " nodes but class '" + klass + "' allows " +
                            std::to_string(nc.max_nodes));

        auto job = std::make_unique<Job>();
        job->req = request;
        job->klass = klass;
        job->env = build_job_env(props_, request.env);
        util::ensure_dir(request.working_dir);
        auto out_dir = request.output_dir.empty() ? request.working_dir : request.output_dir;
        util::ensure_dir(out_dir);
        job->status.stdout_path = out_dir / "stdout.log";
        job->status.stderr_path = out_dir / "stderr.log";

        std::unique_lock lock(mu_);
        if (shutdown_) throw Error(ErrorKind::Executor, "executor is shutting down");
        std::string id = "local-" + std::to_string(++next_id_);
        Job* raw = job.get();
        jobs_.emplace(id, std::move(job));
        queues_[klass].push_back(raw);
        pump(lock);
        return {id};
    }

    JobStatus poll(const JobHandle& handle) override {
        std::unique_lock lock(mu_);
        return find(handle)->status;
    }

    std::vector<JobStatus> wait_all(const std::vector<JobHandle>& handles,
                                    std::chrono::milliseconds timeout) override {
        using clock = std::chrono::steady_clock;
        auto deadline = timeout.count() > 0 ? clock::now() + timeout : clock::time_point::max();
        std::unique_lock lock(mu_);
        while (true) {
            bool all_done = true;
            for (const auto& h : handles)
                if (!is_terminal(find(h)->status.state)) {
                    all_done = false;
                    break;
                }
            if (all_done) break;
            if (clock::now() >= deadline) {
                for (const auto& h : handles) {
                    Job* job = find(h);
                    if (is_terminal(job->status.state)) continue;
                    if (job->status.state == JobState::Queued) unqueue(job);
                    job->cancel.store(true);
                    job->status.state = JobState::TimedOut;
                    job->status.detail = "wait_all timeout";
                }
                break;
            }
            cv_.wait_until(lock, deadline);
        }
        std::vector<JobStatus> out;
        out.reserve(handles.size());
        for (const auto& h : handles) out.push_back(find(h)->status);
        return out;
    }

    JobStatus cancel(const JobHandle& handle) override {
        std::unique_lock lock(mu_);
        Job* job = find(handle);
        if (job->status.state == JobState::Queued) {
            unqueue(job);
            job->status.state = JobState::Cancelled;
            job->status.detail = "cancelled while queued";
        } else if (job->status.state == JobState::Running) {
            job->cancel.store(true);  // the worker finishes the transition
        }
        return job->status;
    }

    const MachineProperties& machine() const override { return props_; }
    std::string kind() const override { return "local"; }

private:
    struct Job {
        JobRequest req;
        std::string klass;
        std::map<std::string, std::string> env;
        JobStatus status;
        std::atomic<bool> cancel{false};
        std::thread worker;
    };

    Job* find(const JobHandle& handle) {
        auto it = jobs_.find(handle.id);
        if (it == jobs_.end())
            throw Error(ErrorKind::Executor, "unknown job '" + handle.id + "'");
        return it->second.get();
    }

    void unqueue(Job* job) {
        auto& q = queues_[job->klass];
        for (auto it = q.begin(); it != q.end(); ++it)
            if (*it == job) {
                q.erase(it);
                break;
            }
    }

    // Starts queued jobs while their class has capacity.  Caller holds mu_.
    void pump(std::unique_lock<std::mutex>&) {
        if (shutdown_) return;
        for (auto& [klass, queue] : queues_) {
            int capacity = props_.node_class(klass).capacity;
            while (!queue.empty() && running_[klass] < capacity) {
                Job* job = queue.front();
                queue.pop_front();
                ++running_[klass];
                job->status.state = JobState::Running;
                if (job->worker.joinable()) job->worker.join();
                job->worker = std::thread([this, job] { run(job); });
            }
        }
    }

    void run(Job* job) {
        using clock = std::chrono::steady_clock;
        auto deadline = job->req.timeout.count() > 0 ? clock::now() + job->req.timeout
                                                     : clock::time_point{};
        CommandOutcome outcome;
        std::string error;
        try {
            outcome = run_command_list(job->req.commands, job->req.working_dir, job->env,
                                       job->status.stdout_path, job->status.stderr_path, deadline,
                                       &job->cancel);
        } catch (const Error& e) {
            error = e.what();
        }
        std::unique_lock lock(mu_);
        --running_[job->klass];
        if (job->status.state == JobState::Running) {  // nobody forced a terminal state
            if (!error.empty()) {
                job->status.state = JobState::Failed;
                job->status.detail = error;
            } else if (outcome.cancelled) {
                job->status.state = JobState::Cancelled;
                job->status.detail = "cancelled";
            } else if (outcome.timed_out) {
                job->status.state = JobState::TimedOut;
                job->status.detail = "job timeout";
            } else if (outcome.exit_code != 0) {
                job->status.state = JobState::Failed;
                job->status.exit_code = outcome.exit_code;
                job->status.detail =
                    "command " + std::to_string(outcome.failed_command) + " exited with " +
                    std::to_string(outcome.exit_code);
            } else {
                job->status.state = JobState::Succeeded;
                job->status.exit_code = 0;
            }
        }
        pump(lock);
        cv_.notify_all();
    }

    MachineProperties props_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, std::unique_ptr<Job>> jobs_;
    std::map<std::string, std::deque<Job*>> queues_;
    std::map<std::string, int> running_;
    long next_id_ = 0;
    bool shutdown_ = false;
};

}  // namespace

std::unique_ptr<Executor> make_local_executor(MachineProperties machine) {
    return std::make_unique<LocalExecutor>(machine);
}

}  // namespace benchforge::exec
