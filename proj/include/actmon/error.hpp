#pragma once

#include <stdexcept>
#include <string>

namespace actmon {

enum class ErrorKind {
    EmptyInput,
    InsufficientData,
    Parameter,
    Schema,
    Data,
    Stream,
    Parse,
    Auth,
    NotFound,
    Io,
    CorruptModel,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Data: return "data";
    case ErrorKind::Stream: return "stream";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Auth: return "auth";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Io: return "io";
    case ErrorKind::CorruptModel: return "corrupt-model";
    }
    return "unknown";
}

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace actmon
