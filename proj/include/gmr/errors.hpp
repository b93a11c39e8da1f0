#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (BVH, URDF, JSON documents).
class ParseError : public Error {
public:
    enum class Kind {
        Syntax,
        MissingSection,
        FrameCountMismatch,
        ChannelCountMismatch,
        UnknownChannel,
        KinematicLoop,
        UnsupportedJoint,
        MissingLimits,
        Schema,
    };

    ParseError(Kind kind, std::size_t line, const std::string& what)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          kind_(kind), line_(line) {}

    Kind kind() const noexcept { return kind_; }
    /// 1-based line number, 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    Kind kind_;
    std::size_t line_;
};

/// Semantically invalid input: unknown names, widened limits, negative weights.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// The inner box-QP failed to reach its KKT tolerance within its budget.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual, long frame = -1)
        : Error(what), residual_(residual), frame_(frame) {}

    double residual() const noexcept { return residual_; }
    /// Source frame index when raised from sequence retargeting, else -1.
    long frame() const noexcept { return frame_; }

private:
    double residual_;
    long frame_;
};

}  // namespace gmr
