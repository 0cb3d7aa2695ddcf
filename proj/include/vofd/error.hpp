#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vofd {

/// Failure categories raised by the numerical core.
///
/// The C API maps each value onto a stable integer status code, so new
/// entries must be appended at the end.
enum class ErrorCode {
    invalid_grid = 1,
    invalid_boundary_spec,
    invalid_order,
    invalid_density,
    invalid_potential,
    shape_error,
    lifting_failure,
    branch_cut,
    solve_failure,
    domain_error,
    unbounded_estimate,
    estimate_failure,
    contour_error,
    realness_violation,
    evaluation_error,
    not_applicable,
    budget_error,
    invalid_drive,
    horizon_error,
    fit_failure,
    extraction_error,
    analytic_extension_error,
    config_error,
    io_error,
    schema_mismatch,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// True for failures that stem from user input rather than from numerics.
bool is_usage_error(ErrorCode code) noexcept;

}  // namespace vofd
