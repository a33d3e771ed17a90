#include "ipwsel/errors.hpp"

namespace ipwsel {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::SingularJacobian: return "SingularJacobian";
        case ErrorKind::MaxIterationsExceeded: return "MaxIterationsExceeded";
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::Separation: return "Separation";
        case ErrorKind::DegenerateOutcome: return "DegenerateOutcome";
        case ErrorKind::EmptyCategory: return "EmptyCategory";
        case ErrorKind::ResponseOnBoundary: return "ResponseOnBoundary";
        case ErrorKind::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
        case ErrorKind::InfeasibleTotals: return "InfeasibleTotals";
        case ErrorKind::SingularBread: return "SingularBread";
        case ErrorKind::SingularH: return "SingularH";
        case ErrorKind::UnmatchedCell: return "UnmatchedCell";
        case ErrorKind::DegenerateCutoffs: return "DegenerateCutoffs";
        case ErrorKind::SparseBin: return "SparseBin";
        case ErrorKind::AllReplicationsFailed: return "AllReplicationsFailed";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::NonBinaryIndicator: return "NonBinaryIndicator";
        case ErrorKind::NonNumericCell: return "NonNumericCell";
        case ErrorKind::ProbabilitySumOutOfRange: return "ProbabilitySumOutOfRange";
        case ErrorKind::DuplicateCell: return "DuplicateCell";
        case ErrorKind::MissingN: return "MissingN";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_convergence_failure(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::SingularJacobian:
        case ErrorKind::MaxIterationsExceeded:
        case ErrorKind::NonConvergence:
        case ErrorKind::Separation:
        case ErrorKind::InfeasibleTotals:
        case ErrorKind::SingularBread:
        case ErrorKind::SingularH:
        case ErrorKind::DegenerateDenominator:
        case ErrorKind::AllReplicationsFailed:
            return true;
        default:
            return false;
    }
}

}  // namespace ipwsel
