#include "vofd/error.hpp"

namespace vofd {

std::string_view error_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_grid: return "InvalidGrid";
        case ErrorCode::invalid_boundary_spec: return "InvalidBoundarySpec";
        case ErrorCode::invalid_order: return "InvalidOrder";
        case ErrorCode::invalid_density: return "InvalidDensity";
        case ErrorCode::invalid_potential: return "InvalidPotential";
        case ErrorCode::shape_error: return "ShapeError";
        case ErrorCode::lifting_failure: return "LiftingFailure";
        case ErrorCode::branch_cut: return "BranchCutError";
        case ErrorCode::solve_failure: return "SolveFailure";
        case ErrorCode::domain_error: return "DomainError";
        case ErrorCode::unbounded_estimate: return "UnboundedEstimate";
        case ErrorCode::estimate_failure: return "EstimateFailure";
        case ErrorCode::contour_error: return "ContourError";
        case ErrorCode::realness_violation: return "RealnessViolation";
        case ErrorCode::evaluation_error: return "EvaluationError";
        case ErrorCode::not_applicable: return "NotApplicable";
        case ErrorCode::budget_error: return "BudgetError";
        case ErrorCode::invalid_drive: return "InvalidDrive";
        case ErrorCode::horizon_error: return "HorizonError";
        case ErrorCode::fit_failure: return "FitFailure";
        case ErrorCode::extraction_error: return "ExtractionError";
        case ErrorCode::analytic_extension_error: return "AnalyticExtensionError";
        case ErrorCode::config_error: return "ConfigError";
        case ErrorCode::io_error: return "IOError";
        case ErrorCode::schema_mismatch: return "SchemaMismatch";
    }
    return "UnknownError";
}

bool is_usage_error(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::config_error:
        case ErrorCode::io_error:
        case ErrorCode::schema_mismatch:
            return true;
        default:
            return false;
    }
}

}  // namespace vofd
