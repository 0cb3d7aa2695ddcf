#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vofd/contour.hpp"
#include "vofd/grid.hpp"

namespace vofd::app {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kVersion = "0.1.0";

/// Reads a JSON config file. Syntax errors raise Error(config_error) with
/// the line and column; unreadable files raise Error(io_error).
Json load_config(const std::filesystem::path& path);
Json parse_config_text(std::string_view text);

/// Applies "a.b.c=value" to the tree. The value is parsed as JSON when it
/// is valid JSON and taken as a string otherwise. Intermediate objects are
/// created as needed; key validity is checked later by `parse_experiment`.
void apply_override(Json& tree, std::string_view key_value);

enum class Task { solve, dtn, invert, verify_resolvent, oracle };
std::string task_name(Task t);

struct GridConfig {
    int dimension = 1;
    int n = 64;
    std::vector<Interval> extent;
    BoundarySubsetSpec subsets;
};

/// Initial data: a coefficient-style spec in x and y, or eigenvector `mode`
/// (1-based, ascending eigenvalues) of A_q as returned by operator_mode.
struct InitialConfig {
    std::optional<CoefficientSpec> values;
    int mode = 0;
};

struct PowerTermConfig {
    CoefficientSpec coeff = CoefficientSpec::constant(0.0);
    CoefficientSpec exponent = CoefficientSpec::constant(0.0);
};

struct SourceConfig {
    std::string expr;  // empty unless an expression source
    std::vector<PowerTermConfig> power;
};

struct ProblemConfig {
    GridConfig grid;
    DiffusionTensor tensor;
    CoefficientSpec alpha = CoefficientSpec::constant(0.5);
    CoefficientSpec rho = CoefficientSpec::constant(1.0);
    CoefficientSpec q = CoefficientSpec::constant(0.0);
    InitialConfig initial;
    SourceConfig source;
    std::vector<double> times;
};

struct SolverConfig {
    ContourOptions contour;
    double residual_tol = 1e-12;
};

enum class DtNMode { laplace, time, pipeline };

struct DtNConfig {
    DtNMode mode = DtNMode::laplace;
    int k = 2;
    /// Expressions in x and y evaluated on boundary nodes; nodal unit drives
    /// on S_in when empty.
    std::vector<std::string> drives;
    std::vector<Complex> points;
    double pipeline_tol = 1e-6;
};

struct InvertConfig {
    std::filesystem::path dtn_csv;
    std::filesystem::path drives_csv;
    double reg_weight = 1e-8;
    double gradient_tol = 1e-10;
    int max_iterations = 200;
    /// Report errors against problem.coefficients.
    bool truth = false;
};

struct ResolventConfig {
    int samples = 100;
    double r_min = 1e-2;
    double r_max = 1e2;
    double tol = 1e-8;
    int max_iterations = 500;
    double envelope_r_min = 1e-3;
    double envelope_r_max = 1e3;
};

enum class OracleMethod { co_reference, l1, mittag_leffler };

struct OracleConfig {
    OracleMethod method = OracleMethod::co_reference;
    double dt = 1e-3;
    long step_cap = 200000;
    bool first_step_correction = true;
    double ml_alpha = 0.5;
    double ml_beta = 1.0;
    std::vector<Complex> z;
};

struct ExperimentConfig {
    Task task = Task::solve;
    unsigned seed = 12345;
    int threads = 1;
    std::filesystem::path out_dir = "out";
    ProblemConfig problem;
    SolverConfig solver;
    DtNConfig dtn;
    InvertConfig invert;
    ResolventConfig resolvent;
    OracleConfig oracle;
    /// Normalized input tree, echoed in the run report.
    Json tree;
};

/// Strict conversion of a config tree. Unknown keys, wrong types and
/// unknown enum strings raise Error(config_error) naming the full key path;
/// missing input files raise Error(io_error). Ranges of numerical
/// parameters are left to the numerical core.
ExperimentConfig parse_experiment(const Json& tree);

struct RunSummary {
    std::vector<std::filesystem::path> artifacts;
    Json report;
};

/// Executes the configured task and writes CSVs plus `<task>_report.json`
/// into out_dir. CSV bytes depend only on the config and seed.
RunSummary run(const ExperimentConfig& config);

struct ColumnDiff {
    std::string name;
    bool numeric = true;
    double max_abs = 0.0;
    double max_rel = 0.0;  // max_abs over the largest magnitude in the second file
};

struct CompareReport {
    std::size_t rows = 0;
    std::vector<ColumnDiff> columns;
    double tolerance = 0.0;
    bool pass = true;
};

/// Column-wise comparison of two CSV files with identical headers and row
/// counts. Text columns must match exactly. Error(schema_mismatch) otherwise.
CompareReport compare_csv(const std::filesystem::path& a, const std::filesystem::path& b, double tolerance);

/// Comma-separated table with a header row; numbers use 17 significant digits.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string format_double(double v);

/// Eigenvector `mode` (1-based) of A_q, signed so that its first component
/// above roundoff is positive.
Vector operator_mode(const EllipticOperator& op, int mode);

}  // namespace vofd::app
