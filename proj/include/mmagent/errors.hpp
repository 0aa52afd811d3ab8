#pragma once

#include <stdexcept>
#include <string>

namespace mmagent {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data: problem files, library files, config files.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// A model reply that failed structural parsing after the re-prompt budget.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Gateway-level failures: exhausted mock script, transport errors, unknown tag.
class GatewayError : public Error {
public:
    explicit GatewayError(const std::string& msg) : Error(msg) {}
};

// Template registry problems: unknown template, missing required slot.
class TemplateError : public Error {
public:
    explicit TemplateError(const std::string& msg) : Error(msg) {}
};

// Sandbox failures that are not expressible as an execution status.
class SandboxError : public Error {
public:
    explicit SandboxError(const std::string& msg) : Error(msg) {}
};

}  // namespace mmagent
