#pragma once

#include <stdexcept>
#include <string>

namespace mivec {

// Base for all codec errors; `stage` tags the pipeline stage for diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& msg)
        : std::runtime_error("[" + stage + "] " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

class IoError : public Error {
public:
    IoError(const std::string& stage, const std::string& msg) : Error(stage, msg) {}
};

// Malformed or truncated coded data (prefix codes, container segments, CRC).
class CorruptStreamError : public Error {
public:
    CorruptStreamError(const std::string& stage, const std::string& msg) : Error(stage, msg) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& msg) : Error("explicit-backend", msg) {}
};

} // namespace mivec
