#include "benchforge/executor.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <thread>

#include "benchforge/config.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge::exec {

namespace {

[[noreturn]] void fail_machine(const std::string& msg) { throw Error(ErrorKind::Machine, msg); }

const std::vector<std::string> kDefaultAllowlist = {"PATH", "HOME", "USER", "SHELL",
                                                    "TMPDIR", "LANG"};

}  // namespace

const char* to_string(JobState state) {
    switch (state) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Succeeded: return "succeeded";
    case JobState::Failed: return "failed";
    case JobState::Cancelled: return "cancelled";
    case JobState::TimedOut: return "timed_out";
    }
    return "?";
}

bool is_terminal(JobState state) {
    return state == JobState::Succeeded || state == JobState::Failed ||
           state == JobState::Cancelled || state == JobState::TimedOut;
}

const NodeClass& MachineProperties::node_class(const std::string& klass) const {
    auto it = node_classes.find(klass);
    if (it == node_classes.end())
        fail_machine("machine '" + name + "' has no node class '" + klass + "'");
    return it->second;
}

std::string MachineProperties::class_for_stage(const std::string& stage) const {
    auto it = stage_classes.find(stage);
    if (it != stage_classes.end()) return it->second;
    return default_class;
}

bool MachineProperties::stage_needs_internet(const std::string& stage) const {
    for (const auto& s : internet_stages)
        if (s == stage) return true;
    return false;
}

MachineProperties parse_machine_properties(const std::string& yaml_text, const std::string& name) {
    config::ConfigDocument doc;
    try {
        doc = config::parse_document(yaml_text, name);
    } catch (const Error& e) {
        fail_machine("machine file '" + name + "': " + e.what());
    }
    MachineProperties props;
    props.name = doc.name;

    auto get_string = [&](const std::string& key, const std::string& fallback) {
        auto it = doc.entries.find(key);
        if (it == doc.entries.end()) return fallback;
        if (it->second.is_list() || it->second.scalar().kind() != ValueKind::String)
            fail_machine("machine '" + name + "': '" + key + "' must be a string");
        return it->second.scalar().as_string();
    };
    auto get_string_list = [&](const std::string& key,
                               const std::vector<std::string>& fallback) {
        auto it = doc.entries.find(key);
        if (it == doc.entries.end()) return fallback;
        if (!it->second.is_list())
            fail_machine("machine '" + name + "': '" + key + "' must be a list");
        std::vector<std::string> out;
        for (const auto& v : it->second.list()) {
            if (v.kind() != ValueKind::String)
                fail_machine("machine '" + name + "': '" + key + "' must list strings");
            out.push_back(v.as_string());
        }
        return out;
    };

    props.default_executor = get_string("executor", "local");
    if (props.default_executor != "local" && props.default_executor != "mock")
        fail_machine("machine '" + name + "': unknown executor '" + props.default_executor + "'");
    props.env_allowlist = get_string_list("env_allowlist", kDefaultAllowlist);
    props.internet_stages = get_string_list("internet_stages", {"Preparation"});

    const std::string prefix = "node_classes.";
    for (const auto& [key, entry] : doc.entries) {
        if (!util::starts_with(key, prefix)) continue;
        auto parts = util::split(key.substr(prefix.size()), '.');
        if (parts.size() != 2)
            fail_machine("machine '" + name + "': malformed node class key '" + key + "'");
        NodeClass& nc = props.node_classes[parts[0]];
        const std::string& field = parts[1];
        if (field == "internet") {
            if (entry.is_list() || entry.scalar().kind() != ValueKind::Bool)
                fail_machine("machine '" + name + "': '" + key + "' must be a bool");
            nc.internet_access = entry.scalar().as_bool();
            continue;
        }
        if (entry.is_list() || entry.scalar().kind() != ValueKind::Int)
            fail_machine("machine '" + name + "': '" + key + "' must be an int");
        long v = entry.scalar().as_int();
        if (field == "capacity") {
            if (v < 1) fail_machine("machine '" + name + "': capacity of '" + parts[0] + "' must be >= 1");
            nc.capacity = static_cast<int>(v);
        } else if (field == "max_nodes") {
            if (v < 1) fail_machine("machine '" + name + "': max_nodes of '" + parts[0] + "' must be >= 1");
            nc.max_nodes = static_cast<int>(v);
        } else if (field == "queue_delay_ticks") {
            if (v < 0) fail_machine("machine '" + name + "': queue_delay_ticks must be >= 0");
            nc.queue_delay_ticks = static_cast<int>(v);
        } else {
            fail_machine("machine '" + name + "': unknown node class field '" + key + "'");
        }
    }
    if (props.node_classes.empty())
        fail_machine("machine '" + name + "' defines no node classes");

    props.default_class = get_string("default_class", "");
    if (props.default_class.empty()) {
        if (props.node_classes.size() == 1) props.default_class = props.node_classes.begin()->first;
        else fail_machine("machine '" + name + "' needs a default_class");
    }
    props.node_class(props.default_class);  // must exist

    const std::string sprefix = "stage_classes.";
    for (const auto& [key, entry] : doc.entries) {
        if (!util::starts_with(key, sprefix)) continue;
        std::string stage = key.substr(sprefix.size());
        if (entry.is_list() || entry.scalar().kind() != ValueKind::String)
            fail_machine("machine '" + name + "': '" + key + "' must name a node class");
        props.node_class(entry.scalar().as_string());  // must exist
        props.stage_classes[stage] = entry.scalar().as_string();
    }
    return props;
}

MachineProperties load_machine_properties(const std::filesystem::path& site_root,
                                          const std::string& name) {
    namespace fs = std::filesystem;
    fs::path base = site_root / "machines" / name;
    fs::path file;
    if (fs::is_regular_file(base)) file = base;
    else if (fs::is_regular_file(base.string() + ".yaml")) file = base.string() + ".yaml";
    else
        fail_machine("unknown machine '" + name + "' (no property file under " +
                     (site_root / "machines").string() + ")");
    return parse_machine_properties(util::read_file(file), name);
}

std::map<std::string, std::string> build_job_env(const MachineProperties& machine,
                                                 const std::map<std::string, std::string>& overlay) {
    std::map<std::string, std::string> env;
    for (const auto& key : machine.env_allowlist) {
        const char* v = std::getenv(key.c_str());
        if (v) env[key] = v;
    }
    for (const auto& [k, v] : overlay) env[k] = v;
    return env;
}

CommandOutcome run_command_list(const std::vector<std::string>& commands,
                                const std::filesystem::path& working_dir,
                                const std::map<std::string, std::string>& env,
                                const std::filesystem::path& stdout_file,
                                const std::filesystem::path& stderr_file,
                                std::chrono::steady_clock::time_point deadline,
                                const std::atomic<bool>* cancel_flag) {
    using clock = std::chrono::steady_clock;
    CommandOutcome outcome;

    int out_fd = ::open(stdout_file.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    int err_fd = ::open(stderr_file.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (out_fd < 0 || err_fd < 0) {
        if (out_fd >= 0) ::close(out_fd);
        if (err_fd >= 0) ::close(err_fd);
        throw Error(ErrorKind::Io, "cannot open capture files in " +
                                       stdout_file.parent_path().string());
    }

    std::vector<std::string> env_strings;
    env_strings.reserve(env.size());
    for (const auto& [k, v] : env) env_strings.push_back(k + "=" + v);
    std::vector<char*> envp;
    envp.reserve(env_strings.size() + 1);
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);

    auto expired = [&] { return deadline != clock::time_point{} && clock::now() >= deadline; };
    auto cancelled = [&] { return cancel_flag && cancel_flag->load(); };

    for (std::size_t i = 0; i < commands.size(); ++i) {
        if (cancelled()) { outcome.cancelled = true; break; }
        if (expired()) { outcome.timed_out = true; break; }

        pid_t pid = ::fork();
        if (pid < 0) {
            ::close(out_fd);
            ::close(err_fd);
            throw Error(ErrorKind::Executor, "fork failed: " + std::string(std::strerror(errno)));
        }
        if (pid == 0) {
            ::setpgid(0, 0);
            if (::chdir(working_dir.c_str()) != 0) _exit(127);
            ::dup2(out_fd, STDOUT_FILENO);
            ::dup2(err_fd, STDERR_FILENO);
            const char* argv[] = {"sh", "-c", commands[i].c_str(), nullptr};
            ::execve("/bin/sh", const_cast<char* const*>(argv), envp.data());
            _exit(127);
        }

        int code = 0;
        bool tearing_down = false;
        clock::time_point term_sent;
        while (true) {
            int status = 0;
            pid_t r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid) {
                if (WIFEXITED(status)) code = WEXITSTATUS(status);
                else if (WIFSIGNALED(status)) code = 128 + WTERMSIG(status);
                break;
            }
            if (!tearing_down && (cancelled() || expired())) {
                outcome.cancelled = cancelled();
                outcome.timed_out = !outcome.cancelled;
                tearing_down = true;
                term_sent = clock::now();
                ::kill(-pid, SIGTERM);
            } else if (tearing_down && clock::now() - term_sent > std::chrono::milliseconds(500)) {
                ::kill(-pid, SIGKILL);
                term_sent = clock::now();
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        if (tearing_down) break;
        if (code != 0) {
            outcome.exit_code = code;
            outcome.failed_command = static_cast<int>(i);
            break;
        }
    }
    ::close(out_fd);
    ::close(err_fd);
    return outcome;
}

std::unique_ptr<Executor> make_executor(const std::string& kind, MachineProperties machine) {
    std::string k = kind.empty() ? machine.default_executor : kind;
    if (k == "local") return make_local_executor(std::move(machine));
    if (k == "mock") return std::make_unique<MockBatchExecutor>(std::move(machine));
    throw Error(ErrorKind::Usage, "unknown executor kind '" + k + "' (expected local or mock)");
}

}  // namespace benchforge::exec
