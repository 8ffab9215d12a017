#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace msde {

enum class ErrorCode {
    InvalidArgument,
    ColumnNormViolation,
    OrthogonalityViolation,
    InsufficientSamples,
    NonFiniteSample,
    StepTooCoarse,
    NumericalBlowup,
    DegenerateEpsilon,
    DissipativityViolated,
    NotPSD,
    NotSymmetric,
    InsufficientHorizon,
    UnboundedPayoff,
    DegenerateVolatility,
    Unsupported,
    SchemaMismatch,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ColumnNormViolation: return "ColumnNormViolation";
    case ErrorCode::OrthogonalityViolation: return "OrthogonalityViolation";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::StepTooCoarse: return "StepTooCoarse";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::DegenerateEpsilon: return "DegenerateEpsilon";
    case ErrorCode::DissipativityViolated: return "DissipativityViolated";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::InsufficientHorizon: return "InsufficientHorizon";
    case ErrorCode::UnboundedPayoff: return "UnboundedPayoff";
    case ErrorCode::DegenerateVolatility: return "DegenerateVolatility";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    }
    return "Unknown";
}

/// Library-wide exception. The code is what callers branch on; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /// True for failures of the numerics (as opposed to bad input).
    bool numerical() const noexcept {
        return code_ == ErrorCode::NumericalBlowup || code_ == ErrorCode::NonFiniteSample ||
               code_ == ErrorCode::NotPSD || code_ == ErrorCode::DegenerateVolatility ||
               code_ == ErrorCode::DissipativityViolated;
    }

private:
    ErrorCode code_;
};

class NumericalBlowup : public Error {
public:
    NumericalBlowup(std::size_t path_index, double time, double value)
        : Error(ErrorCode::NumericalBlowup,
                "path " + std::to_string(path_index) + " left the overflow guard at t=" +
                    std::to_string(time) + " (value " + std::to_string(value) + ")"),
          path_index_(path_index), time_(time) {}

    std::size_t path_index() const noexcept { return path_index_; }
    double time() const noexcept { return time_; }

private:
    std::size_t path_index_;
    double time_;
};

inline void require(bool condition, const std::string& what,
                    ErrorCode code = ErrorCode::InvalidArgument) {
    if (!condition) throw Error(code, what);
}

} // namespace msde
