#ifndef VOFD_H
#define VOFD_H

/*
 * C interface to the variable-order fractional diffusion toolkit.
 *
 * All functions return a vofd_status. On failure, vofd_last_error() returns
 * a message for the calling thread that stays valid until the next call on
 * that thread. Handles are opaque and must be released with their _free
 * function; passing NULL to a _free function is allowed.
 */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(VOFD_BUILDING_LIBRARY)
#    define VOFD_API __declspec(dllexport)
#  else
#    define VOFD_API __declspec(dllimport)
#  endif
#else
#  define VOFD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vofd_status {
    VOFD_OK = 0,
    VOFD_INVALID_GRID = 1,
    VOFD_INVALID_BOUNDARY_SPEC = 2,
    VOFD_INVALID_ORDER = 3,
    VOFD_INVALID_DENSITY = 4,
    VOFD_INVALID_POTENTIAL = 5,
    VOFD_SHAPE_ERROR = 6,
    VOFD_LIFTING_FAILURE = 7,
    VOFD_BRANCH_CUT = 8,
    VOFD_SOLVE_FAILURE = 9,
    VOFD_DOMAIN_ERROR = 10,
    VOFD_UNBOUNDED_ESTIMATE = 11,
    VOFD_ESTIMATE_FAILURE = 12,
    VOFD_CONTOUR_ERROR = 13,
    VOFD_REALNESS_VIOLATION = 14,
    VOFD_EVALUATION_ERROR = 15,
    VOFD_NOT_APPLICABLE = 16,
    VOFD_BUDGET_ERROR = 17,
    VOFD_INVALID_DRIVE = 18,
    VOFD_HORIZON_ERROR = 19,
    VOFD_FIT_FAILURE = 20,
    VOFD_EXTRACTION_ERROR = 21,
    VOFD_ANALYTIC_EXTENSION_ERROR = 22,
    VOFD_CONFIG_ERROR = 23,
    VOFD_IO_ERROR = 24,
    VOFD_SCHEMA_MISMATCH = 25,
    VOFD_NULL_ARGUMENT = 100,
    VOFD_INTERNAL_ERROR = 101
} vofd_status;

/* Library version string, e.g. "0.1.0". */
VOFD_API const char* vofd_version(void);

/* Name of a status, e.g. "ContourError". */
VOFD_API const char* vofd_status_name(vofd_status status);

/* Nonzero for failures caused by usage or configuration rather than numerics. */
VOFD_API int vofd_status_is_usage(vofd_status status);

/* Message of the most recent failure on this thread ("" if none). */
VOFD_API const char* vofd_last_error(void);

/* ------------------------------------------------------------------------ */
/* Experiment configs                                                        */

typedef struct vofd_config vofd_config;

VOFD_API vofd_status vofd_config_load(const char* path, vofd_config** out);
VOFD_API vofd_status vofd_config_parse(const char* json_text, vofd_config** out);
/* Applies "key.path=value"; validation happens in vofd_config_validate. */
VOFD_API vofd_status vofd_config_override(vofd_config* config, const char* key_value);
VOFD_API vofd_status vofd_config_set_out_dir(vofd_config* config, const char* dir);
VOFD_API vofd_status vofd_config_set_seed(vofd_config* config, unsigned long seed);
VOFD_API vofd_status vofd_config_set_threads(vofd_config* config, int threads);
/* Forces the task ("solve", "dtn", "invert", "verify-resolvent", "oracle"). */
VOFD_API vofd_status vofd_config_set_task(vofd_config* config, const char* task);
/* Strict check of keys, types and referenced files. */
VOFD_API vofd_status vofd_config_validate(const vofd_config* config);
VOFD_API void vofd_config_free(vofd_config* config);

/* Runs the configured task. When report_json is non-NULL it receives a
 * malloc-allocated copy of the run report, released with vofd_string_free. */
VOFD_API vofd_status vofd_run(const vofd_config* config, char** report_json);
VOFD_API void vofd_string_free(char* s);

/* ------------------------------------------------------------------------ */
/* CSV comparison                                                            */

typedef struct vofd_compare_report vofd_compare_report;

VOFD_API vofd_status vofd_compare(const char* csv_a, const char* csv_b, double tolerance,
                                  vofd_compare_report** out);
VOFD_API int vofd_compare_pass(const vofd_compare_report* report);
VOFD_API size_t vofd_compare_rows(const vofd_compare_report* report);
VOFD_API size_t vofd_compare_columns(const vofd_compare_report* report);
/* Column name, numeric flag, and max absolute / relative difference. */
VOFD_API vofd_status vofd_compare_column(const vofd_compare_report* report, size_t index, const char** name,
                                         int* numeric, double* max_abs, double* max_rel);
VOFD_API void vofd_compare_free(vofd_compare_report* report);

/* ------------------------------------------------------------------------ */
/* Direct numerical access                                                   */

typedef struct vofd_problem vofd_problem;

/* Unit interval (dimension 1) or unit square (dimension 2) with n intervals
 * per axis, full boundary, identity diffusion tensor. Coefficients are
 * expressions in x and y. */
VOFD_API vofd_status vofd_problem_create(int dimension, int n, const char* alpha_expr, const char* rho_expr,
                                         const char* q_expr, vofd_problem** out);
VOFD_API void vofd_problem_free(vofd_problem* problem);

VOFD_API size_t vofd_problem_interior_count(const vofd_problem* problem);
VOFD_API size_t vofd_problem_boundary_count(const vofd_problem* problem);
/* x and y of every interior node (arrays of interior_count entries). */
VOFD_API vofd_status vofd_problem_interior_coords(const vofd_problem* problem, double* x, double* y);

/* u(t_k) for u0 and zero source; out holds n_times * interior_count values,
 * time-major. theta <= 0 selects the default angle. */
VOFD_API vofd_status vofd_solve_forward(const vofd_problem* problem, const double* u0, const double* times,
                                        size_t n_times, double theta, double* out);

/* Constant-order eigen-expansion reference with the same layout. */
VOFD_API vofd_status vofd_co_reference(const vofd_problem* problem, const double* u0, const double* times,
                                       size_t n_times, double* out);

/* Outward flux on the whole boundary of the Laplace-domain Dirichlet problem
 * at real p > 0 with boundary values g (boundary_count entries each). */
VOFD_API vofd_status vofd_laplace_dtn(const vofd_problem* problem, double p, const double* g, double* flux);

VOFD_API vofd_status vofd_mittag_leffler(double alpha, double beta, double z_re, double z_im, double* value_re,
                                         double* value_im);

#ifdef __cplusplus
}
#endif

#endif
