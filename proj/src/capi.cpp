#include "vofd/vofd.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "vofd/app.hpp"
#include "vofd/dtn.hpp"
#include "vofd/error.hpp"
#include "vofd/oracle.hpp"

using namespace vofd;

static_assert(VOFD_SCHEMA_MISMATCH == static_cast<int>(ErrorCode::schema_mismatch));
static_assert(VOFD_CONTOUR_ERROR == static_cast<int>(ErrorCode::contour_error));
static_assert(VOFD_CONFIG_ERROR == static_cast<int>(ErrorCode::config_error));

struct vofd_config {
    app::Json tree;
};

struct vofd_compare_report {
    app::CompareReport report;
};

struct vofd_problem {
    vofd_problem(SpatialGrid g, CoefficientField f)
        : grid(std::move(g)), field(std::move(f)), op(assemble_operator(grid, field)), solver(op, field) {}

    SpatialGrid grid;
    CoefficientField field;
    EllipticOperator op;
    ShiftedSolver solver;
};

namespace {

thread_local std::string last_error;

template <class Fn>
vofd_status guarded(Fn&& fn) {
    try {
        last_error.clear();
        fn();
        return VOFD_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return static_cast<vofd_status>(e.code());
    } catch (const std::exception& e) {
        last_error = std::string("InternalError: ") + e.what();
        return VOFD_INTERNAL_ERROR;
    } catch (...) {
        last_error = "InternalError: unknown exception";
        return VOFD_INTERNAL_ERROR;
    }
}

vofd_status null_arg(const char* what) {
    last_error = std::string("NullArgument: ") + what;
    return VOFD_NULL_ARGUMENT;
}

char* duplicate(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

Vector copy_in(const double* data, std::size_t n) {
    return Eigen::Map<const Vector>(data, static_cast<Eigen::Index>(n));
}

}  // namespace

extern "C" {

const char* vofd_version(void) { return app::kVersion.data(); }

const char* vofd_status_name(vofd_status status) {
    switch (status) {
        case VOFD_OK: return "OK";
        case VOFD_NULL_ARGUMENT: return "NullArgument";
        case VOFD_INTERNAL_ERROR: return "InternalError";
        default:
            if (status >= VOFD_INVALID_GRID && status <= VOFD_SCHEMA_MISMATCH)
                return error_name(static_cast<ErrorCode>(status)).data();
            return "UnknownStatus";
    }
}

int vofd_status_is_usage(vofd_status status) {
    if (status == VOFD_NULL_ARGUMENT) return 1;
    if (status >= VOFD_INVALID_GRID && status <= VOFD_SCHEMA_MISMATCH)
        return is_usage_error(static_cast<ErrorCode>(status)) ? 1 : 0;
    return 0;
}

const char* vofd_last_error(void) { return last_error.c_str(); }

vofd_status vofd_config_load(const char* path, vofd_config** out) {
    if (!path || !out) return null_arg("path and out are required");
    return guarded([&] { *out = new vofd_config{app::load_config(path)}; });
}

vofd_status vofd_config_parse(const char* json_text, vofd_config** out) {
    if (!json_text || !out) return null_arg("json_text and out are required");
    return guarded([&] { *out = new vofd_config{app::parse_config_text(json_text)}; });
}

vofd_status vofd_config_override(vofd_config* config, const char* key_value) {
    if (!config || !key_value) return null_arg("config and key_value are required");
    return guarded([&] { app::apply_override(config->tree, key_value); });
}

vofd_status vofd_config_set_out_dir(vofd_config* config, const char* dir) {
    if (!config || !dir) return null_arg("config and dir are required");
    return guarded([&] { config->tree["output"]["dir"] = dir; });
}

vofd_status vofd_config_set_seed(vofd_config* config, unsigned long seed) {
    if (!config) return null_arg("config is required");
    return guarded([&] { config->tree["seed"] = seed; });
}

vofd_status vofd_config_set_threads(vofd_config* config, int threads) {
    if (!config) return null_arg("config is required");
    return guarded([&] { config->tree["threads"] = threads; });
}

vofd_status vofd_config_set_task(vofd_config* config, const char* task) {
    if (!config || !task) return null_arg("config and task are required");
    return guarded([&] { config->tree["task"] = task; });
}

vofd_status vofd_config_validate(const vofd_config* config) {
    if (!config) return null_arg("config is required");
    return guarded([&] { (void)app::parse_experiment(config->tree); });
}

void vofd_config_free(vofd_config* config) { delete config; }

vofd_status vofd_run(const vofd_config* config, char** report_json) {
    if (!config) return null_arg("config is required");
    return guarded([&] {
        const app::RunSummary s = app::run(app::parse_experiment(config->tree));
        if (report_json) *report_json = duplicate(s.report.dump(2));
    });
}

void vofd_string_free(char* s) { std::free(s); }

vofd_status vofd_compare(const char* csv_a, const char* csv_b, double tolerance, vofd_compare_report** out) {
    if (!csv_a || !csv_b || !out) return null_arg("csv_a, csv_b and out are required");
    return guarded([&] { *out = new vofd_compare_report{app::compare_csv(csv_a, csv_b, tolerance)}; });
}

int vofd_compare_pass(const vofd_compare_report* report) { return report && report->report.pass ? 1 : 0; }

size_t vofd_compare_rows(const vofd_compare_report* report) { return report ? report->report.rows : 0; }

size_t vofd_compare_columns(const vofd_compare_report* report) { return report ? report->report.columns.size() : 0; }

vofd_status vofd_compare_column(const vofd_compare_report* report, size_t index, const char** name, int* numeric,
                                double* max_abs, double* max_rel) {
    if (!report) return null_arg("report is required");
    if (index >= report->report.columns.size()) {
        last_error = "DomainError: column index out of range";
        return VOFD_DOMAIN_ERROR;
    }
    const app::ColumnDiff& c = report->report.columns[index];
    if (name) *name = c.name.c_str();
    if (numeric) *numeric = c.numeric ? 1 : 0;
    if (max_abs) *max_abs = c.max_abs;
    if (max_rel) *max_rel = c.max_rel;
    return VOFD_OK;
}

void vofd_compare_free(vofd_compare_report* report) { delete report; }

vofd_status vofd_problem_create(int dimension, int n, const char* alpha_expr, const char* rho_expr, const char* q_expr,
                                vofd_problem** out) {
    if (!alpha_expr || !rho_expr || !q_expr || !out) return null_arg("expressions and out are required");
    return guarded([&] {
        const std::vector<Interval> ext(dimension == 2 ? 2u : 1u, Interval{0.0, 1.0});
        SpatialGrid grid = build_grid(dimension, ext, n);
        CoefficientField field = sample_coefficients(CoefficientSpec::expr(alpha_expr), CoefficientSpec::expr(rho_expr),
                                                     CoefficientSpec::expr(q_expr), grid);
        *out = new vofd_problem(std::move(grid), std::move(field));
    });
}

void vofd_problem_free(vofd_problem* problem) { delete problem; }

size_t vofd_problem_interior_count(const vofd_problem* problem) {
    return problem ? problem->grid.interior_count() : 0;
}

size_t vofd_problem_boundary_count(const vofd_problem* problem) {
    return problem ? problem->grid.boundary_count() : 0;
}

vofd_status vofd_problem_interior_coords(const vofd_problem* problem, double* x, double* y) {
    if (!problem || !x || !y) return null_arg("problem, x and y are required");
    const auto& c = problem->grid.interior_coords();
    for (std::size_t i = 0; i < c.size(); ++i) {
        x[i] = c[i][0];
        y[i] = c[i][1];
    }
    return VOFD_OK;
}

vofd_status vofd_solve_forward(const vofd_problem* problem, const double* u0, const double* times, size_t n_times,
                               double theta, double* out) {
    if (!problem || !u0 || !times || !out) return null_arg("problem, u0, times and out are required");
    return guarded([&] {
        ContourOptions o;
        if (theta > 0.0) o.theta = theta;
        const std::size_t n = problem->grid.interior_count();
        const auto snaps = solve_forward(problem->solver, copy_in(u0, n), Source::zero(),
                                         std::span<const double>(times, n_times), o);
        for (std::size_t k = 0; k < snaps.size(); ++k) Eigen::Map<Vector>(out + k * n, static_cast<Eigen::Index>(n)) = snaps[k].u;
    });
}

vofd_status vofd_co_reference(const vofd_problem* problem, const double* u0, const double* times, size_t n_times,
                              double* out) {
    if (!problem || !u0 || !times || !out) return null_arg("problem, u0, times and out are required");
    return guarded([&] {
        const std::size_t n = problem->grid.interior_count();
        const auto snaps = co_reference_solution(problem->op, problem->field, copy_in(u0, n),
                                                 std::span<const double>(times, n_times));
        for (std::size_t k = 0; k < snaps.size(); ++k) Eigen::Map<Vector>(out + k * n, static_cast<Eigen::Index>(n)) = snaps[k].u;
    });
}

vofd_status vofd_laplace_dtn(const vofd_problem* problem, double p, const double* g, double* flux) {
    if (!problem || !g || !flux) return null_arg("problem, g and flux are required");
    return guarded([&] {
        const DtNRecord r = laplace_dtn(problem->solver, Complex(p, 0.0), copy_in(g, problem->grid.boundary_count()));
        const auto& s_out = problem->grid.s_out();
        for (std::size_t i = 0; i < s_out.size(); ++i) flux[i] = r.flux[static_cast<Eigen::Index>(i)].real();
    });
}

vofd_status vofd_mittag_leffler(double alpha, double beta, double z_re, double z_im, double* value_re,
                                double* value_im) {
    if (!value_re || !value_im) return null_arg("value_re and value_im are required");
    return guarded([&] {
        const Complex v = mittag_leffler(alpha, beta, Complex(z_re, z_im));
        *value_re = v.real();
        *value_im = v.imag();
    });
}

}  // extern "C"
