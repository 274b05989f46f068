#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vtnet {

// Base for all recoverable domain errors. The CLI maps these to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedRow : Error {
    MalformedRow(const std::string& file, std::size_t line, const std::string& reason)
        : Error(file + ":" + std::to_string(line) + ": " + reason), line_number(line) {}
    std::size_t line_number;
};

struct UnknownTask : Error {
    using Error::Error;
};

struct UnlabeledTask : Error {
    using Error::Error;
};

struct InvalidConfig : Error {
    using Error::Error;
};

struct EmptyAfterTrim : Error {
    using Error::Error;
};

struct NoValidGaze : Error {
    using Error::Error;
};

struct EmptyInput : Error {
    using Error::Error;
};

struct TooFewMinority : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct BadTarget : Error {
    using Error::Error;
};

struct NonFinite : Error {
    using Error::Error;
};

struct TooFewUsers : Error {
    using Error::Error;
};

struct OneClassOnly : Error {
    using Error::Error;
};

struct EmptyTrainingSet : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace vtnet
