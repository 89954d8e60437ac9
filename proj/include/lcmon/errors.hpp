#pragma once

#include <stdexcept>
#include <string>

namespace lcmon {

// Error taxonomy shared by the library and the CLI. The CLI maps each
// category to a distinct exit code.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ComputationError : std::runtime_error {
    explicit ComputationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parse failures carry the 1-based line number of the offending record.
struct ParseError : ValidationError {
    ParseError(const std::string& msg, std::size_t line)
        : ValidationError(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    std::size_t line_number;
};

}  // namespace lcmon
