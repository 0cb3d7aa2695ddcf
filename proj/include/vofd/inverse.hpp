#pragma once

#include <span>
#include <string>
#include <vector>

#include "vofd/dtn.hpp"
#include "vofd/grid.hpp"

namespace vofd {

/// Laplace-domain DtN data at one real p: boundary drives and the observed
/// fluxes on S_out, one column per drive.
struct DtNDataset {
    double p = 1.0;
    std::vector<Vector> g;
    std::vector<Vector> flux;
};

/// Synthetic dataset from the forward model for the given drives.
DtNDataset laplace_dataset(const ShiftedSolver& solver, double p, std::span<const Vector> drives);

/// Unit vectors on every boundary node of S_in.
std::vector<Vector> full_boundary_drives(const SpatialGrid& grid);

struct PotentialOptions {
    double reg_weight = 1e-8;
    double gradient_tol = 1e-10;
    int max_iterations = 200;
    DiffusionTensor tensor;
};

/// Nodal estimate of V = q + rho p^alpha from one dataset.
struct PotentialEstimate {
    double p = 0.0;
    Vector V;
    double residual = 0.0;  // ||model - data|| / ||data|| over all drives
    double reg_weight = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;
    /// Set when the drives do not span the boundary nodes of S_in that
    /// couple to the interior; the fit still runs.
    bool identifiability_warning = false;
};

/// Gauss-Newton fit of the discrete DtN map of A_0 + diag(V) to the data,
/// with penalty reg_weight |grad V|^2 and a constant initial guess matched
/// to the mean flux. Throws Error(fit_failure) when the iteration produces
/// non-finite values or a singular model.
PotentialEstimate recover_potential(const DtNDataset& data, const SpatialGrid& grid,
                                    const PotentialOptions& options = {});

struct InverseResult {
    Vector alpha, rho, q;
    /// Nodes where ln((V_e - q)/rho) fell outside (0, 1) and was clipped.
    std::vector<std::size_t> out_of_class;
    double p_small = 0.0;
    /// max(rho) p_s^{min alpha}, the size of the small-p bias in q.
    double q_bias_bound = 0.0;
    std::vector<PotentialEstimate> potentials;
};

/// q = V(p_s), rho = V(1) - q, alpha = ln((V(e) - q) / rho), nodewise.
/// Throws Error(extraction_error) for rho <= 0 or V(e) < V(1) at any node.
InverseResult extract_pointwise(const Vector& v_small, const Vector& v_one, const Vector& v_e, double p_small);

/// Datasets at p_s < 1, p = 1 and p = e in any order.
InverseResult invert_all(std::span<const DtNDataset> datasets, const SpatialGrid& grid,
                         const PotentialOptions& options = {});

struct InverseErrors {
    double alpha = 0.0, rho = 0.0, q = 0.0;  // relative L2
};
InverseErrors relative_errors(const InverseResult& result, const CoefficientField& truth);

/// Sampling times for the time-to-Laplace pipeline: panels
/// [0, 2^-levels], dyadic panels up to 1, doubling panels up to the horizon
/// max(40 / p_min, 20). Each panel holds `per_panel` Chebyshev points and
/// one held-out midpoint.
struct PipelineSchedule {
    std::vector<double> breaks;
    int per_panel = 12;
    std::vector<double> times;  // ascending
    std::vector<std::vector<std::size_t>> panel_nodes;  // indices into times
    std::vector<std::size_t> held_out;                  // one per panel
};
PipelineSchedule pipeline_schedule(double p_min, int per_panel = 12, int levels = 10);

/// Time-domain DtN samples for one drive t^k g at the schedule times.
struct TimeDtNSeries {
    Vector g;
    int k = 2;
    std::vector<Vector> flux;
};

/// Laplace-domain datasets at each target p from time samples.
///
/// The known part t^k dG (G the harmonic lift of g) is transformed exactly;
/// the remainder is interpolated panel by panel and integrated with Gauss
/// rules. A held-out sample that the interpolant misses by more than tol,
/// measured against max_t e^{-p_min t} |flux(t)|, raises
/// Error(analytic_extension_error).
std::vector<DtNDataset> time_to_laplace_pipeline(const PipelineSchedule& schedule,
                                                 std::span<const TimeDtNSeries> series, const SpatialGrid& grid,
                                                 std::span<const double> p_targets, double tol = 1e-6);

}  // namespace vofd
