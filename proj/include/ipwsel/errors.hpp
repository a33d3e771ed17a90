#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ipwsel {

enum class ErrorKind {
    InvalidArgument,
    // numerical
    SingularJacobian,
    MaxIterationsExceeded,
    NonConvergence,
    Separation,
    DegenerateOutcome,
    EmptyCategory,
    ResponseOnBoundary,
    RankDeficientDesign,
    DegenerateDenominator,
    InfeasibleTotals,
    SingularBread,
    SingularH,
    // weights / summaries
    UnmatchedCell,
    DegenerateCutoffs,
    SparseBin,
    // study
    AllReplicationsFailed,
    // input
    MissingColumn,
    NonBinaryIndicator,
    NonNumericCell,
    ProbabilitySumOutOfRange,
    DuplicateCell,
    MissingN,
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Convergence-type failures map to CLI exit status 3; everything else is a
// validation failure (exit status 2).
bool is_convergence_failure(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
    if (!condition) fail(ErrorKind::InvalidArgument, message);
}

}  // namespace ipwsel
