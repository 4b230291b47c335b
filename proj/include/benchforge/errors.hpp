#pragma once

#include <stdexcept>
#include <string>

namespace benchforge {

// Error categories map onto the CLI exit-code contract: user-side errors
// (bad config, bad templates, bad flags) exit 1, execution-side errors
// (jobs, archive, I/O) exit 2.
enum class ErrorKind {
    Usage,
    Config,
    Schema,
    Template,
    Machine,
    Executor,
    Run,
    Archive,
    Analysis,
    Workload,
    Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    // 1 = user error, 2 = execution failure.
    int exit_code() const {
        switch (kind_) {
        case ErrorKind::Usage:
        case ErrorKind::Config:
        case ErrorKind::Schema:
        case ErrorKind::Template:
        case ErrorKind::Machine:
        case ErrorKind::Analysis:
            return 1;
        default:
            return 2;
        }
    }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Config: return "config";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Template: return "template";
    case ErrorKind::Machine: return "machine";
    case ErrorKind::Executor: return "executor";
    case ErrorKind::Run: return "run";
    case ErrorKind::Archive: return "archive";
    case ErrorKind::Analysis: return "analysis";
    case ErrorKind::Workload: return "workload";
    case ErrorKind::Io: return "io";
    }
    return "error";
}

}  // namespace benchforge
