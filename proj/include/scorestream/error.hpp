#pragma once

#include <stdexcept>
#include <string>

namespace scorestream {

/// Failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind {
    Config = 1,     ///< usage, configuration or precondition violation
    Runtime = 2,    ///< I/O failures, divergence, unavailable services
    Integrity = 3,  ///< corrupt, truncated or mismatched persisted data
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return {ErrorKind::Config, what}; }
inline Error runtime_error(const std::string& what) { return {ErrorKind::Runtime, what}; }
inline Error integrity_error(const std::string& what) { return {ErrorKind::Integrity, what}; }

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Runtime: return "runtime";
    case ErrorKind::Integrity: return "integrity";
    }
    return "unknown";
}

}  // namespace scorestream
