#ifndef HRGROUP_ERROR_HPP
#define HRGROUP_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace hrgroup {

enum class ErrorCode {
    // ingest
    MissingColumn,
    UnknownLabel,
    NonMonotonicTimestamps,
    OutOfRangeBpm,
    MalformedInput,
    EmptySeries,
    InvalidSpec,
    // preprocess / features
    DegenerateSeries,
    DimensionMismatch,
    WindowTooShort,
    // clustering
    MissingActivity,
    TooFewVectors,
    NoWindows,
    // svm
    SingleClassInput,
    NonFiniteFeature,
    // neuralnet
    InvalidConfig,
    ShapeMismatch,
    EmptyDataset,
    // evaluation
    EmptyCluster,
    ClusterTooSmall,
    SeriesTooShort,
    // cli / io
    ConfigError,
    IoError,
    InvariantViolation,
};

inline std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::OutOfRangeBpm: return "OutOfRangeBpm";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::MissingActivity: return "MissingActivity";
    case ErrorCode::TooFewVectors: return "TooFewVectors";
    case ErrorCode::NoWindows: return "NoWindows";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::ClusterTooSmall: return "ClusterTooSmall";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace hrgroup

#endif
