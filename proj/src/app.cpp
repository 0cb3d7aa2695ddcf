#include "vofd/app.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "vofd/dtn.hpp"
#include "vofd/error.hpp"
#include "vofd/inverse.hpp"
#include "vofd/oracle.hpp"
#include "vofd/parallel.hpp"

namespace vofd::app {

namespace {

[[noreturn]] void config_fail(const std::string& msg) { throw Error(ErrorCode::config_error, msg); }

std::string join_path(const std::string& base, std::string_view key) {
    return base.empty() ? std::string(key) : base + "." + std::string(key);
}

/// Object node whose keys are checked against an allowed set on construction.
class Obj {
public:
    Obj(const Json& j, std::string path, std::initializer_list<std::string_view> allowed)
        : j_(j), path_(std::move(path)) {
        if (!j.is_object()) config_fail("'" + (path_.empty() ? std::string("<root>") : path_) + "' must be an object");
        for (const auto& [key, value] : j.items()) {
            (void)value;
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                config_fail("unknown key '" + join_path(path_, key) + "'");
        }
    }

    bool has(std::string_view key) const { return j_.contains(std::string(key)); }
    const Json& at(std::string_view key) const { return j_.at(std::string(key)); }
    std::string path(std::string_view key) const { return join_path(path_, key); }

    double number(std::string_view key, double fallback) const {
        if (!has(key)) return fallback;
        const Json& v = at(key);
        if (!v.is_number()) config_fail("'" + path(key) + "' must be a number");
        return v.get<double>();
    }
    long integer(std::string_view key, long fallback) const {
        if (!has(key)) return fallback;
        const Json& v = at(key);
        if (!v.is_number_integer()) config_fail("'" + path(key) + "' must be an integer");
        return v.get<long>();
    }
    bool boolean(std::string_view key, bool fallback) const {
        if (!has(key)) return fallback;
        const Json& v = at(key);
        if (!v.is_boolean()) config_fail("'" + path(key) + "' must be true or false");
        return v.get<bool>();
    }
    std::string string(std::string_view key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        const Json& v = at(key);
        if (!v.is_string()) config_fail("'" + path(key) + "' must be a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(std::string_view key) const {
        if (!has(key)) return {};
        const Json& v = at(key);
        if (!v.is_array()) config_fail("'" + path(key) + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) config_fail("'" + path(key) + "' must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<std::string> strings(std::string_view key, std::vector<std::string> fallback) const {
        if (!has(key)) return fallback;
        const Json& v = at(key);
        if (!v.is_array()) config_fail("'" + path(key) + "' must be an array of strings");
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string()) config_fail("'" + path(key) + "' must be an array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }

private:
    const Json& j_;
    std::string path_;
};

template <class E>
E choose(const std::string& value, const std::string& path, std::initializer_list<std::pair<std::string_view, E>> options) {
    std::string names;
    for (const auto& [name, e] : options) {
        if (name == value) return e;
        names += (names.empty() ? "" : ", ") + std::string(name);
    }
    config_fail("'" + path + "' must be one of " + names + " (got '" + value + "')");
}

CoefficientSpec expression_spec(const std::string& source, const std::string& path) {
    try {
        return CoefficientSpec::expr(source);
    } catch (const Error& e) {
        config_fail("'" + path + "': " + e.what());
    }
}

CoefficientSpec coeff_spec(const Json& j, const std::string& path) {
    if (j.is_number()) return CoefficientSpec::constant(j.get<double>());
    if (j.is_string()) return expression_spec(j.get<std::string>(), path);
    const Obj o(j, path, {"value", "expr", "table"});
    const int given = int(o.has("value")) + int(o.has("expr")) + int(o.has("table"));
    if (given != 1) config_fail("'" + path + "' needs exactly one of value, expr, table");
    if (o.has("value")) return CoefficientSpec::constant(o.number("value", 0.0));
    if (o.has("expr")) return expression_spec(o.string("expr", ""), o.path("expr"));
    return CoefficientSpec::table(o.numbers("table"));
}

Complex complex_point(const Json& j, const std::string& path) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return {j[0].get<double>(), j[1].get<double>()};
    config_fail("'" + path + "' entries must be numbers or [re, im] pairs");
}

std::vector<Complex> complex_points(const Obj& o, std::string_view key) {
    if (!o.has(key)) return {};
    const Json& v = o.at(key);
    if (!v.is_array()) config_fail("'" + o.path(key) + "' must be an array");
    std::vector<Complex> out;
    for (const auto& e : v) out.push_back(complex_point(e, o.path(key)));
    return out;
}

GridConfig parse_grid(const Json& j, const std::string& path) {
    const Obj o(j, path, {"dimension", "n", "extent", "s_in", "s_out"});
    GridConfig g;
    g.dimension = static_cast<int>(o.integer("dimension", 1));
    g.n = static_cast<int>(o.integer("n", 64));
    if (o.has("extent")) {
        const Json& e = o.at("extent");
        if (!e.is_array()) config_fail("'" + o.path("extent") + "' must be an array of [lo, hi] pairs");
        for (const auto& pair : e) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
                config_fail("'" + o.path("extent") + "' must be an array of [lo, hi] pairs");
            g.extent.push_back({pair[0].get<double>(), pair[1].get<double>()});
        }
    } else {
        g.extent.assign(static_cast<std::size_t>(std::max(g.dimension, 1)), Interval{0.0, 1.0});
    }
    g.subsets.s_in = o.strings("s_in", {"all"});
    g.subsets.s_out = o.strings("s_out", {"all"});
    return g;
}

ProblemConfig parse_problem(const Json& j) {
    const Obj o(j, "problem", {"grid", "tensor", "coefficients", "initial", "source", "times"});
    ProblemConfig p;
    if (o.has("grid")) p.grid = parse_grid(o.at("grid"), o.path("grid"));
    else p.grid.extent.assign(1, Interval{0.0, 1.0});
    if (o.has("tensor")) {
        const Obj t(o.at("tensor"), o.path("tensor"), {"axx", "ayy"});
        p.tensor.axx = t.number("axx", 1.0);
        p.tensor.ayy = t.number("ayy", 1.0);
    }
    if (o.has("coefficients")) {
        const Obj c(o.at("coefficients"), o.path("coefficients"), {"alpha", "rho", "q"});
        if (c.has("alpha")) p.alpha = coeff_spec(c.at("alpha"), c.path("alpha"));
        if (c.has("rho")) p.rho = coeff_spec(c.at("rho"), c.path("rho"));
        if (c.has("q")) p.q = coeff_spec(c.at("q"), c.path("q"));
    }
    if (o.has("initial")) {
        const Json& init = o.at("initial");
        if (init.is_object() && init.contains("mode")) {
            const Obj m(init, o.path("initial"), {"mode"});
            p.initial.mode = static_cast<int>(m.integer("mode", 1));
            if (p.initial.mode < 1) config_fail("'" + m.path("mode") + "' must be at least 1");
        } else {
            p.initial.values = coeff_spec(init, o.path("initial"));
        }
    }
    if (o.has("source")) {
        const Obj s(o.at("source"), o.path("source"), {"expr", "power"});
        if (s.has("expr") && s.has("power")) config_fail("'" + o.path("source") + "' takes either expr or power");
        p.source.expr = s.string("expr", "");
        if (s.has("power")) {
            const Json& terms = s.at("power");
            if (!terms.is_array()) config_fail("'" + s.path("power") + "' must be an array");
            for (std::size_t i = 0; i < terms.size(); ++i) {
                const std::string tp = s.path("power") + "[" + std::to_string(i) + "]";
                const Obj t(terms[i], tp, {"coeff", "exponent"});
                if (!t.has("coeff") || !t.has("exponent")) config_fail("'" + tp + "' needs coeff and exponent");
                p.source.power.push_back({coeff_spec(t.at("coeff"), t.path("coeff")),
                                          coeff_spec(t.at("exponent"), t.path("exponent"))});
            }
        }
    }
    p.times = o.numbers("times");
    return p;
}

SolverConfig parse_solver(const Json& j) {
    const Obj o(j, "solver", {"theta", "epsilon", "arc_panels", "gauss_order", "ray_panel_width", "truncation",
                              "realness_tol", "duhamel_panels", "residual_tol"});
    SolverConfig s;
    ContourOptions& c = s.contour;
    c.theta = o.number("theta", c.theta);
    if (o.has("epsilon") && !o.at("epsilon").is_null()) c.epsilon = o.number("epsilon", 0.5);
    c.arc_panels = static_cast<int>(o.integer("arc_panels", c.arc_panels));
    c.gauss_order = static_cast<int>(o.integer("gauss_order", c.gauss_order));
    c.ray_panel_width = o.number("ray_panel_width", c.ray_panel_width);
    c.truncation = o.number("truncation", c.truncation);
    c.realness_tol = o.number("realness_tol", c.realness_tol);
    c.duhamel_panels = static_cast<int>(o.integer("duhamel_panels", c.duhamel_panels));
    s.residual_tol = o.number("residual_tol", s.residual_tol);
    return s;
}

DtNConfig parse_dtn(const Json& j) {
    const Obj o(j, "dtn", {"mode", "k", "drives", "points", "pipeline_tol"});
    DtNConfig d;
    d.mode = choose<DtNMode>(o.string("mode", "laplace"), o.path("mode"),
                             {{"laplace", DtNMode::laplace}, {"time", DtNMode::time}, {"pipeline", DtNMode::pipeline}});
    d.k = static_cast<int>(o.integer("k", 2));
    d.drives = o.strings("drives", {});
    d.points = complex_points(o, "points");
    d.pipeline_tol = o.number("pipeline_tol", d.pipeline_tol);
    return d;
}

InvertConfig parse_invert(const Json& j) {
    const Obj o(j, "invert", {"dtn_csv", "drives_csv", "reg_weight", "gradient_tol", "max_iterations", "truth"});
    InvertConfig c;
    c.dtn_csv = o.string("dtn_csv", "");
    c.drives_csv = o.string("drives_csv", "");
    c.reg_weight = o.number("reg_weight", c.reg_weight);
    c.gradient_tol = o.number("gradient_tol", c.gradient_tol);
    c.max_iterations = static_cast<int>(o.integer("max_iterations", c.max_iterations));
    c.truth = o.boolean("truth", false);
    return c;
}

ResolventConfig parse_resolvent(const Json& j) {
    const Obj o(j, "resolvent",
                {"samples", "r_min", "r_max", "tol", "max_iterations", "envelope_r_min", "envelope_r_max"});
    ResolventConfig r;
    r.samples = static_cast<int>(o.integer("samples", r.samples));
    if (r.samples < 1) config_fail("'resolvent.samples' must be at least 1");
    r.r_min = o.number("r_min", r.r_min);
    r.r_max = o.number("r_max", r.r_max);
    r.tol = o.number("tol", r.tol);
    r.max_iterations = static_cast<int>(o.integer("max_iterations", r.max_iterations));
    r.envelope_r_min = o.number("envelope_r_min", r.envelope_r_min);
    r.envelope_r_max = o.number("envelope_r_max", r.envelope_r_max);
    return r;
}

OracleConfig parse_oracle(const Json& j) {
    const Obj o(j, "oracle", {"method", "dt", "step_cap", "first_step_correction", "alpha", "beta", "z"});
    OracleConfig c;
    c.method = choose<OracleMethod>(o.string("method", "co_reference"), o.path("method"),
                                    {{"co_reference", OracleMethod::co_reference},
                                     {"l1", OracleMethod::l1},
                                     {"mittag_leffler", OracleMethod::mittag_leffler}});
    c.dt = o.number("dt", c.dt);
    c.step_cap = o.integer("step_cap", c.step_cap);
    c.first_step_correction = o.boolean("first_step_correction", true);
    c.ml_alpha = o.number("alpha", c.ml_alpha);
    c.ml_beta = o.number("beta", c.ml_beta);
    c.z = complex_points(o, "z");
    return c;
}

void require_file(const std::filesystem::path& p, const std::string& key) {
    if (p.empty()) config_fail("'" + key + "' is required for this task");
    if (!std::filesystem::is_regular_file(p))
        throw Error(ErrorCode::io_error, "'" + key + "' refers to a missing file: " + p.string());
}

// ---------------------------------------------------------------------------
// Problem assembly

struct Problem {
    Problem(SpatialGrid g, CoefficientField f, const DiffusionTensor& tensor, double tol)
        : grid(std::move(g)), field(std::move(f)), op(assemble_operator(grid, field, tensor)), solver(op, field, tol) {}

    SpatialGrid grid;
    CoefficientField field;
    EllipticOperator op;
    ShiftedSolver solver;
};

std::unique_ptr<Problem> build_problem(const ExperimentConfig& c) {
    const ProblemConfig& p = c.problem;
    SpatialGrid grid = build_grid(p.grid.dimension, p.grid.extent, p.grid.n, p.grid.subsets);
    CoefficientField field = sample_coefficients(p.alpha, p.rho, p.q, grid);
    return std::make_unique<Problem>(std::move(grid), std::move(field), p.tensor, c.solver.residual_tol);
}

Vector initial_data(const ExperimentConfig& c, const Problem& pr) {
    const InitialConfig& init = c.problem.initial;
    if (init.mode > 0) return operator_mode(pr.op, init.mode);
    if (init.values) return init.values->sample(pr.grid);
    return Vector::Zero(static_cast<Eigen::Index>(pr.grid.interior_count()));
}

Source make_source(const ExperimentConfig& c, const Problem& pr) {
    const SourceConfig& s = c.problem.source;
    if (!s.expr.empty()) return Source::expression(s.expr, pr.grid);
    if (s.power.empty()) return Source::zero();
    std::vector<PowerTerm> terms;
    for (const auto& t : s.power) terms.push_back({t.coeff.sample(pr.grid), t.exponent.sample(pr.grid)});
    return Source::power_law(std::move(terms));
}

ContourOptions contour_options(const ExperimentConfig& c) {
    ContourOptions o = c.solver.contour;
    o.threads = c.threads;
    return o;
}

const std::vector<double>& require_times(const ExperimentConfig& c) {
    if (c.problem.times.empty()) config_fail("'problem.times' must list at least one time for this task");
    return c.problem.times;
}

std::string fmt(double v) { return format_double(v); }

CsvTable solution_table(const SpatialGrid& grid, const std::vector<SolutionSnapshot>& snaps) {
    CsvTable t{{"t", "node", "x", "y", "u"}, {}};
    for (const auto& s : snaps) {
        for (std::size_t i = 0; i < grid.interior_count(); ++i) {
            const auto& xy = grid.interior_coords()[i];
            t.rows.push_back({fmt(s.t), std::to_string(i), fmt(xy[0]), fmt(xy[1]), fmt(s.u[static_cast<Eigen::Index>(i)])});
        }
    }
    return t;
}

Json snapshot_report(const std::vector<SolutionSnapshot>& snaps) {
    Json arr = Json::array();
    for (const auto& s : snaps)
        arr.push_back({{"t", s.t}, {"imag_residual", s.imag_residual}, {"provenance", provenance_name(s.provenance)}});
    return arr;
}

struct Output {
    const ExperimentConfig& config;
    RunSummary summary;

    void table(const std::string& name, const CsvTable& t) {
        const auto path = config.out_dir / name;
        write_csv(path, t);
        summary.artifacts.push_back(path);
    }
};

// ---------------------------------------------------------------------------
// Tasks

void run_solve(const ExperimentConfig& c, Output& out, Json& results) {
    const auto owned = build_problem(c);
    const Problem& pr = *owned;
    const auto& times = require_times(c);
    const ContourOptions opts = contour_options(c);
    const auto snaps = solve_forward(pr.solver, initial_data(c, pr), make_source(c, pr), times, opts);
    out.table("solution.csv", solution_table(pr.grid, snaps));
    Json contours = Json::array();
    for (double t : times) {
        const ContourQuadrature q = contour_for_time(t, opts);
        contours.push_back({{"t", t}, {"epsilon", q.epsilon}, {"theta", q.theta}, {"r_max", q.r_max},
                            {"nodes", q.nodes.size()}});
    }
    results["contours"] = contours;
    results["snapshots"] = snapshot_report(snaps);
    results["source_route"] = make_source(c, pr).has_laplace_form() ? "laplace" : "duhamel";
}

void run_oracle(const ExperimentConfig& c, Output& out, Json& results) {
    const OracleConfig& o = c.oracle;
    if (o.method == OracleMethod::mittag_leffler) {
        if (o.z.empty()) config_fail("'oracle.z' must list at least one argument");
        CsvTable t{{"alpha", "beta", "z_re", "z_im", "value_re", "value_im"}, {}};
        for (const Complex z : o.z) {
            const Complex e = mittag_leffler(o.ml_alpha, o.ml_beta, z);
            t.rows.push_back({fmt(o.ml_alpha), fmt(o.ml_beta), fmt(z.real()), fmt(z.imag()), fmt(e.real()), fmt(e.imag())});
        }
        out.table("mittag_leffler.csv", t);
        results["method"] = "mittag_leffler";
        results["evaluations"] = o.z.size();
        return;
    }
    const auto owned = build_problem(c);
    const Problem& pr = *owned;
    const auto& times = require_times(c);
    const Vector u0 = initial_data(c, pr);
    std::vector<SolutionSnapshot> snaps;
    if (o.method == OracleMethod::co_reference) {
        snaps = co_reference_solution(pr.op, pr.field, u0, times);
        results["method"] = "co_reference";
    } else {
        L1Options lo;
        lo.step_cap = o.step_cap;
        lo.first_step_correction = o.first_step_correction;
        lo.report_times = times;
        const double T = *std::max_element(times.begin(), times.end());
        snaps = l1_solve(pr.op, pr.field, u0, make_source(c, pr), o.dt, T, lo);
        results["method"] = "l1";
        results["dt"] = o.dt;
        results["first_step_correction"] = o.first_step_correction;
    }
    out.table("solution.csv", solution_table(pr.grid, snaps));
    results["snapshots"] = snapshot_report(snaps);
}

std::vector<Vector> drive_vectors(const ExperimentConfig& c, const SpatialGrid& grid) {
    if (c.dtn.drives.empty()) return full_boundary_drives(grid);
    std::vector<Vector> out;
    for (std::size_t d = 0; d < c.dtn.drives.size(); ++d) {
        const std::string key = "dtn.drives[" + std::to_string(d) + "]";
        Expression e = [&] {
            try {
                return Expression(c.dtn.drives[d]);
            } catch (const Error& err) {
                config_fail("'" + key + "': " + err.what());
            }
        }();
        Vector g(static_cast<Eigen::Index>(grid.boundary_count()));
        for (std::size_t b = 0; b < grid.boundary_count(); ++b) {
            const auto& xy = grid.boundary()[b].coord;
            g[static_cast<Eigen::Index>(b)] = e(xy[0], xy[1]);
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<double> real_points(const std::vector<Complex>& pts, const std::string& key) {
    if (pts.empty()) config_fail("'" + key + "' must list at least one point");
    std::vector<double> out;
    for (const Complex p : pts) {
        if (p.imag() != 0.0) config_fail("'" + key + "' must be real for this mode");
        out.push_back(p.real());
    }
    return out;
}

void run_dtn(const ExperimentConfig& c, Output& out, Json& results) {
    const auto owned = build_problem(c);
    const Problem& pr = *owned;
    const DtNConfig& d = c.dtn;
    const std::vector<Vector> gs = drive_vectors(c, pr.grid);
    std::vector<BoundaryDrive> drives;
    for (std::size_t j = 0; j < gs.size(); ++j) drives.push_back(make_drive(pr.op, gs[j], d.k, j));
    const auto& s_out = pr.grid.s_out();

    CsvTable dt{{"drive_id", "k", "boundary_node_index", "x", "y", "g"}, {}};
    for (const auto& drv : drives) {
        for (std::size_t b = 0; b < pr.grid.boundary_count(); ++b) {
            const auto& xy = pr.grid.boundary()[b].coord;
            dt.rows.push_back({std::to_string(drv.id), std::to_string(drv.k), std::to_string(b), fmt(xy[0]),
                               fmt(xy[1]), fmt(drv.g[static_cast<Eigen::Index>(b)])});
        }
    }

    std::vector<DtNRecord> records;
    const ContourOptions opts = contour_options(c);
    if (d.mode == DtNMode::laplace) {
        if (d.points.empty()) config_fail("'dtn.points' must list at least one point");
        const std::size_t n = d.points.size() * drives.size();
        records.resize(n);
        parallel_for(n, c.threads, [&](std::size_t i) {
            records[i] = laplace_dtn(pr.solver, d.points[i / drives.size()], drives[i % drives.size()]);
        });
        results["mode"] = "laplace";
    } else if (d.mode == DtNMode::time) {
        const std::vector<double> times = real_points(d.points, "dtn.points");
        const std::vector<BoundaryResult> per = solve_with_boundary(pr.solver, drives, times, opts);
        for (std::size_t ti = 0; ti < times.size(); ++ti)
            for (const auto& r : per) records.push_back(r.records[ti]);
        results["mode"] = "time";
    } else {
        const std::vector<double> ps = real_points(d.points, "dtn.points");
        const double p_min = *std::min_element(ps.begin(), ps.end());
        const PipelineSchedule sched = pipeline_schedule(p_min);
        const std::vector<BoundaryResult> per = solve_with_boundary(pr.solver, drives, sched.times, opts);
        std::vector<TimeDtNSeries> series(drives.size());
        for (std::size_t j = 0; j < drives.size(); ++j) {
            series[j].g = drives[j].g;
            series[j].k = drives[j].k;
            for (const auto& rec : per[j].records) series[j].flux.push_back(rec.flux.real());
        }
        const auto datasets = time_to_laplace_pipeline(sched, series, pr.grid, ps, d.pipeline_tol);
        for (const auto& ds : datasets) {
            for (std::size_t j = 0; j < ds.flux.size(); ++j) {
                DtNRecord r;
                r.domain = DtNDomain::laplace;
                r.point = Complex(ds.p, 0.0);
                r.drive = j;
                r.flux = ds.flux[j].cast<Complex>();
                records.push_back(std::move(r));
            }
        }
        results["mode"] = "pipeline";
        results["schedule_times"] = sched.times.size();
        results["horizon"] = sched.breaks.back();
    }

    CsvTable ft{{"domain", "point_re", "point_im", "drive_id", "boundary_node_index", "flux_re", "flux_im"}, {}};
    for (const auto& r : records) {
        for (std::size_t i = 0; i < s_out.size(); ++i) {
            const Complex v = r.flux[static_cast<Eigen::Index>(i)];
            ft.rows.push_back({domain_name(r.domain), fmt(r.point.real()), fmt(r.point.imag()), std::to_string(r.drive),
                               std::to_string(s_out[i]), fmt(v.real()), fmt(v.imag())});
        }
    }
    out.table("dtn.csv", ft);
    out.table("drives.csv", dt);
    results["drives"] = drives.size();
    results["records"] = records.size();
}

std::size_t parse_index(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw Error(ErrorCode::schema_mismatch, what + " is not an index: '" + s + "'");
    return v;
}

double parse_number(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw Error(ErrorCode::schema_mismatch, what + " is not a number: '" + s + "'");
    return v;
}

std::size_t column(const CsvTable& t, const std::string& name, const std::filesystem::path& file) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end())
        throw Error(ErrorCode::schema_mismatch, file.string() + " lacks column '" + name + "'");
    return static_cast<std::size_t>(it - t.header.begin());
}

std::vector<DtNDataset> load_datasets(const InvertConfig& ic, const SpatialGrid& grid) {
    const CsvTable drives = read_csv(ic.drives_csv);
    const std::size_t c_id = column(drives, "drive_id", ic.drives_csv);
    const std::size_t c_b = column(drives, "boundary_node_index", ic.drives_csv);
    const std::size_t c_g = column(drives, "g", ic.drives_csv);
    std::map<std::size_t, Vector> g;
    for (const auto& row : drives.rows) {
        const std::size_t id = parse_index(row[c_id], "drive_id");
        const std::size_t b = parse_index(row[c_b], "boundary_node_index");
        if (b >= grid.boundary_count())
            throw Error(ErrorCode::schema_mismatch, "drive boundary index " + std::to_string(b) + " exceeds the grid");
        auto [it, fresh] = g.try_emplace(id, Vector::Zero(static_cast<Eigen::Index>(grid.boundary_count())));
        (void)fresh;
        it->second[static_cast<Eigen::Index>(b)] = parse_number(row[c_g], "g");
    }

    const CsvTable dtn = read_csv(ic.dtn_csv);
    const std::size_t c_dom = column(dtn, "domain", ic.dtn_csv);
    const std::size_t c_re = column(dtn, "point_re", ic.dtn_csv);
    const std::size_t c_im = column(dtn, "point_im", ic.dtn_csv);
    const std::size_t c_drive = column(dtn, "drive_id", ic.dtn_csv);
    const std::size_t c_node = column(dtn, "boundary_node_index", ic.dtn_csv);
    const std::size_t c_flux = column(dtn, "flux_re", ic.dtn_csv);

    std::map<std::size_t, std::size_t> out_pos;
    for (std::size_t i = 0; i < grid.s_out().size(); ++i) out_pos[grid.s_out()[i]] = i;
    const auto n_out = static_cast<Eigen::Index>(grid.s_out().size());

    std::map<double, std::map<std::size_t, std::pair<Vector, std::vector<bool>>>> by_p;
    for (const auto& row : dtn.rows) {
        if (row[c_dom] != "laplace")
            throw Error(ErrorCode::schema_mismatch,
                        "invert needs Laplace-domain records; convert time samples with dtn.mode = pipeline");
        const double p = parse_number(row[c_re], "point_re");
        if (parse_number(row[c_im], "point_im") != 0.0)
            throw Error(ErrorCode::schema_mismatch, "invert needs real Laplace points");
        const std::size_t id = parse_index(row[c_drive], "drive_id");
        if (!g.count(id)) throw Error(ErrorCode::schema_mismatch, "drive " + std::to_string(id) + " missing from drives file");
        const auto pos = out_pos.find(parse_index(row[c_node], "boundary_node_index"));
        if (pos == out_pos.end()) throw Error(ErrorCode::schema_mismatch, "flux row outside S_out of the configured grid");
        auto& slot = by_p[p][id];
        if (slot.first.size() == 0) {
            slot.first = Vector::Zero(n_out);
            slot.second.assign(static_cast<std::size_t>(n_out), false);
        }
        slot.first[static_cast<Eigen::Index>(pos->second)] = parse_number(row[c_flux], "flux_re");
        slot.second[pos->second] = true;
    }
    std::vector<DtNDataset> out;
    for (auto& [p, per_drive] : by_p) {
        DtNDataset ds;
        ds.p = p;
        for (auto& [id, slot] : per_drive) {
            if (std::find(slot.second.begin(), slot.second.end(), false) != slot.second.end())
                throw Error(ErrorCode::schema_mismatch, "incomplete flux for drive " + std::to_string(id));
            ds.g.push_back(g.at(id));
            ds.flux.push_back(slot.first);
        }
        out.push_back(std::move(ds));
    }
    return out;
}

void run_invert(const ExperimentConfig& c, Output& out, Json& results) {
    const ProblemConfig& p = c.problem;
    const SpatialGrid grid = build_grid(p.grid.dimension, p.grid.extent, p.grid.n, p.grid.subsets);
    const auto datasets = load_datasets(c.invert, grid);
    PotentialOptions po;
    po.reg_weight = c.invert.reg_weight;
    po.gradient_tol = c.invert.gradient_tol;
    po.max_iterations = c.invert.max_iterations;
    po.tensor = p.tensor;
    const InverseResult r = invert_all(datasets, grid, po);

    std::set<std::size_t> flagged(r.out_of_class.begin(), r.out_of_class.end());
    CsvTable ft{{"node", "x", "y", "alpha", "rho", "q", "out_of_class"}, {}};
    for (std::size_t i = 0; i < grid.interior_count(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const auto& xy = grid.interior_coords()[i];
        ft.rows.push_back({std::to_string(i), fmt(xy[0]), fmt(xy[1]), fmt(r.alpha[k]), fmt(r.rho[k]), fmt(r.q[k]),
                           flagged.count(i) ? "1" : "0"});
    }
    CsvTable pt{{"p", "node", "x", "y", "V"}, {}};
    Json pots = Json::array();
    for (const auto& e : r.potentials) {
        for (std::size_t i = 0; i < grid.interior_count(); ++i) {
            const auto& xy = grid.interior_coords()[i];
            pt.rows.push_back({fmt(e.p), std::to_string(i), fmt(xy[0]), fmt(xy[1]), fmt(e.V[static_cast<Eigen::Index>(i)])});
        }
        pots.push_back({{"p", e.p}, {"residual", e.residual}, {"iterations", e.iterations},
                        {"gradient_norm", e.gradient_norm}, {"reg_weight", e.reg_weight},
                        {"identifiability_warning", e.identifiability_warning}});
    }
    out.table("fields.csv", ft);
    out.table("potentials.csv", pt);
    results["potentials"] = pots;
    results["p_small"] = r.p_small;
    results["q_bias_bound"] = r.q_bias_bound;
    results["out_of_class"] = r.out_of_class;
    if (c.invert.truth) {
        const CoefficientField truth = sample_coefficients(p.alpha, p.rho, p.q, grid);
        const InverseErrors err = relative_errors(r, truth);
        results["relative_errors"] = {{"alpha", err.alpha}, {"rho", err.rho}, {"q", err.q}};
    }
}

void run_resolvent(const ExperimentConfig& c, Output& out, Json& results) {
    const auto owned = build_problem(c);
    const Problem& pr = *owned;
    const ResolventConfig& rc = c.resolvent;
    if (!(rc.r_min > 0.0) || !(rc.r_max >= rc.r_min))
        throw Error(ErrorCode::domain_error, "resolvent sampling needs 0 < r_min <= r_max");
    // Uniforms come from the top 53 bits so samples do not depend on the
    // standard library's distribution code.
    std::mt19937_64 rng(c.seed);
    auto unit = [](std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; };
    const auto n = static_cast<std::size_t>(rc.samples);
    std::vector<Complex> ps(n);
    for (auto& p : ps) {
        const double r = std::exp(std::log(rc.r_min) + unit(rng) * (std::log(rc.r_max) - std::log(rc.r_min)));
        double beta = std::numbers::pi * (2.0 * unit(rng) - 1.0);
        if (std::abs(beta) >= std::numbers::pi) beta = 0.0;
        p = std::polar(r, beta);
    }
    std::vector<BoundReport> reports(n);
    parallel_for(n, c.threads, [&](std::size_t i) {
        NormEstimateOptions no;
        no.tol = rc.tol;
        no.max_iterations = rc.max_iterations;
        no.seed = static_cast<unsigned>(c.seed + i);
        reports[i] = verify_bound(pr.op, pr.field, ps[i], no);
    });
    CsvTable t{{"r", "beta", "theta_star", "C", "bound", "estimated_norm", "satisfied"}, {}};
    std::size_t satisfied = 0, near = 0;
    for (const auto& b : reports) {
        satisfied += b.satisfied;
        near += b.near_threshold;
        t.rows.push_back({fmt(b.r), fmt(b.beta), fmt(b.theta_star), fmt(b.C), fmt(b.bound), fmt(b.estimated_norm),
                          b.satisfied ? "1" : "0"});
    }
    out.table("resolvent.csv", t);
    results["samples"] = n;
    results["satisfied"] = satisfied;
    results["near_threshold"] = near;
    results["envelope_constant"] = envelope_constant(pr.field, rc.envelope_r_min, rc.envelope_r_max);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config I/O

namespace {

Json parse_json(std::string_view text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        config_fail(origin + ": syntax error: " + e.what());
    }
}

}  // namespace

Json parse_config_text(std::string_view text) { return parse_json(text, "config"); }

Json load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str(), path.string());
}

void apply_override(Json& tree, std::string_view key_value) {
    const auto eq = key_value.find('=');
    if (eq == std::string_view::npos || eq == 0)
        config_fail("override '" + std::string(key_value) + "' must have the form key.path=value");
    const std::string key(key_value.substr(0, eq));
    const std::string text(key_value.substr(eq + 1));
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    if (!tree.is_object()) tree = Json::object();
    Json* node = &tree;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) config_fail("override key '" + key + "' has an empty component");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        Json& next = (*node)[part];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) config_fail("override key '" + key + "' descends into non-object '" + part + "'");
        node = &next;
        start = dot + 1;
    }
}

std::string task_name(Task t) {
    switch (t) {
        case Task::solve: return "solve";
        case Task::dtn: return "dtn";
        case Task::invert: return "invert";
        case Task::verify_resolvent: return "verify-resolvent";
        case Task::oracle: return "oracle";
    }
    return "unknown";
}

ExperimentConfig parse_experiment(const Json& tree) {
    const Obj root(tree, "",
                   {"task", "seed", "threads", "output", "problem", "solver", "dtn", "invert", "resolvent", "oracle"});
    ExperimentConfig c;
    c.tree = tree;
    c.task = choose<Task>(root.string("task", "solve"), "task",
                          {{"solve", Task::solve},
                           {"dtn", Task::dtn},
                           {"invert", Task::invert},
                           {"verify-resolvent", Task::verify_resolvent},
                           {"oracle", Task::oracle}});
    const long seed = root.integer("seed", 12345);
    if (seed < 0) config_fail("'seed' must be non-negative");
    c.seed = static_cast<unsigned>(seed);
    c.threads = static_cast<int>(root.integer("threads", 1));
    if (c.threads < 1) config_fail("'threads' must be at least 1");
    if (root.has("output")) {
        const Obj o(root.at("output"), "output", {"dir"});
        c.out_dir = o.string("dir", "out");
    }
    if (root.has("problem")) c.problem = parse_problem(root.at("problem"));
    else c.problem.grid.extent.assign(1, Interval{0.0, 1.0});
    if (root.has("solver")) c.solver = parse_solver(root.at("solver"));
    if (root.has("dtn")) c.dtn = parse_dtn(root.at("dtn"));
    if (root.has("invert")) c.invert = parse_invert(root.at("invert"));
    if (root.has("resolvent")) c.resolvent = parse_resolvent(root.at("resolvent"));
    if (root.has("oracle")) c.oracle = parse_oracle(root.at("oracle"));
    if (c.task == Task::invert) {
        require_file(c.invert.dtn_csv, "invert.dtn_csv");
        require_file(c.invert.drives_csv, "invert.drives_csv");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Running

RunSummary run(const ExperimentConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create output directory " + config.out_dir.string());

    Output out{config, {}};
    Json results = Json::object();
    const auto start = std::chrono::steady_clock::now();
    switch (config.task) {
        case Task::solve: run_solve(config, out, results); break;
        case Task::oracle: run_oracle(config, out, results); break;
        case Task::dtn: run_dtn(config, out, results); break;
        case Task::invert: run_invert(config, out, results); break;
        case Task::verify_resolvent: run_resolvent(config, out, results); break;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    Json artifacts = Json::array();
    for (const auto& a : out.summary.artifacts) artifacts.push_back(a.filename().string());
    Json report = {{"tool", "vofd"},      {"version", std::string(kVersion)}, {"task", task_name(config.task)},
                   {"seed", config.seed}, {"threads", config.threads},        {"config", config.tree},
                   {"results", results},  {"artifacts", artifacts},           {"timings", {{"run_seconds", seconds}}}};
    const auto report_path = config.out_dir / (task_name(config.task) + "_report.json");
    std::ofstream rf(report_path);
    if (!rf) throw Error(ErrorCode::io_error, "cannot write " + report_path.string());
    rf << report.dump(2) << "\n";
    out.summary.artifacts.push_back(report_path);
    out.summary.report = std::move(report);
    return out.summary;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << "\n";
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
    if (!out) throw Error(ErrorCode::io_error, "failed while writing " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    CsvTable t;
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size())
                throw Error(ErrorCode::schema_mismatch, path.string() + " line " + std::to_string(lineno) + " has " +
                                                            std::to_string(cells.size()) + " cells, header has " +
                                                            std::to_string(t.header.size()));
            t.rows.push_back(std::move(cells));
        }
    }
    if (first) throw Error(ErrorCode::schema_mismatch, path.string() + " has no header row");
    return t;
}

CompareReport compare_csv(const std::filesystem::path& a, const std::filesystem::path& b, double tolerance) {
    const CsvTable ta = read_csv(a);
    const CsvTable tb = read_csv(b);
    if (ta.header != tb.header) throw Error(ErrorCode::schema_mismatch, "headers differ");
    if (ta.rows.size() != tb.rows.size())
        throw Error(ErrorCode::schema_mismatch, "row counts differ (" + std::to_string(ta.rows.size()) + " vs " +
                                                    std::to_string(tb.rows.size()) + ")");
    CompareReport rep;
    rep.rows = ta.rows.size();
    rep.tolerance = tolerance;
    auto as_number = [](const std::string& s, double& v) {
        char* end = nullptr;
        v = std::strtod(s.c_str(), &end);
        return !s.empty() && *end == '\0';
    };
    for (std::size_t c = 0; c < ta.header.size(); ++c) {
        ColumnDiff d;
        d.name = ta.header[c];
        double scale = 0.0;
        for (std::size_t r = 0; r < ta.rows.size() && d.numeric; ++r) {
            double x = 0.0, y = 0.0;
            if (!as_number(ta.rows[r][c], x) || !as_number(tb.rows[r][c], y)) {
                d.numeric = false;
                break;
            }
            d.max_abs = std::max(d.max_abs, std::abs(x - y));
            scale = std::max(scale, std::abs(y));
        }
        if (!d.numeric) {
            d.max_abs = 0.0;
            for (std::size_t r = 0; r < ta.rows.size(); ++r)
                if (ta.rows[r][c] != tb.rows[r][c])
                    throw Error(ErrorCode::schema_mismatch, "text column '" + d.name + "' differs at row " +
                                                                std::to_string(r + 1));
        } else {
            d.max_rel = scale > 0.0 ? d.max_abs / scale : (d.max_abs > 0.0 ? INFINITY : 0.0);
            if (!(d.max_rel <= tolerance)) rep.pass = false;
        }
        rep.columns.push_back(std::move(d));
    }
    return rep;
}

Vector operator_mode(const EllipticOperator& op, int mode) {
    const auto n = static_cast<int>(op.size());
    if (mode < 1 || mode > n) throw Error(ErrorCode::domain_error, "mode index out of range");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(op.matrix()));
    Vector v = es.eigenvectors().col(mode - 1);
    const double cut = 1e-8 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > cut) {
            if (v[i] < 0.0) v = -v;
            break;
        }
    }
    return v;
}

}  // namespace vofd::app
