#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "vofd/app.hpp"

using namespace vofd;
using namespace vofd::app;
using vofd::test::error_of;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "vofd_app_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_text(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

Json eigenmode_config(const fs::path& out) {
    Json j = parse_config_text(R"({
      "task": "solve",
      "problem": {
        "grid": {"dimension": 1, "n": 16},
        "coefficients": {"alpha": 0.6, "rho": 1.0, "q": 0.0},
        "initial": {"mode": 1},
        "times": [0.1, 1.0]
      }
    })");
    j["output"]["dir"] = out.string();
    return j;
}

}  // namespace

TEST_CASE("strict config parsing") {
    SUBCASE("unknown keys are named with their full path") {
        CHECK(error_text([] { parse_experiment(parse_config_text(R"({"alpah": 0.5})")); }).find("'alpah'") !=
              std::string::npos);
        const std::string msg = error_text([] {
            parse_experiment(parse_config_text(R"({"problem": {"coefficients": {"alpah": 0.5}}})"));
        });
        CHECK(msg.find("problem.coefficients.alpah") != std::string::npos);
        CHECK(error_of([] { parse_experiment(parse_config_text(R"({"alpah": 0.5})")); }) == ErrorCode::config_error);
    }
    SUBCASE("types, enums and syntax") {
        CHECK(error_of([] { parse_experiment(parse_config_text(R"({"threads": "four"})")); }) == ErrorCode::config_error);
        CHECK(error_of([] { parse_experiment(parse_config_text(R"({"task": "fly"})")); }) == ErrorCode::config_error);
        CHECK(error_of([] { parse_experiment(parse_config_text(R"({"threads": 0})")); }) == ErrorCode::config_error);
        CHECK(error_of([] { parse_config_text("{\"task\": }"); }) == ErrorCode::config_error);
        CHECK(error_of([] {
                  parse_experiment(parse_config_text(R"({"problem": {"coefficients": {"q": {"expr": "x +* 2"}}}})"));
              }) == ErrorCode::config_error);
        CHECK(error_of([] {
                  parse_experiment(parse_config_text(R"({"problem": {"coefficients": {"q": {"expr": "x", "value": 1}}}})"));
              }) == ErrorCode::config_error);
    }
    SUBCASE("defaults and typed values") {
        const ExperimentConfig c = parse_experiment(parse_config_text(R"({
            "solver": {"theta": 2.5, "epsilon": 0.25},
            "dtn": {"mode": "time", "points": [0.5, [1, 2]]}
        })"));
        CHECK(c.task == Task::solve);
        CHECK(c.seed == 12345u);
        CHECK(c.solver.contour.theta == 2.5);
        CHECK(c.solver.contour.epsilon.value() == 0.25);
        CHECK(c.dtn.mode == DtNMode::time);
        REQUIRE(c.dtn.points.size() == 2);
        CHECK(c.dtn.points[1] == Complex(1.0, 2.0));
    }
    SUBCASE("missing input files") {
        CHECK(error_of([] {
                  parse_experiment(parse_config_text(R"({"task": "invert", "invert": {"dtn_csv": "/nonexistent/a.csv",
                                                          "drives_csv": "/nonexistent/b.csv"}})"));
              }) == ErrorCode::io_error);
        CHECK(error_of([] { parse_experiment(parse_config_text(R"({"task": "invert"})")); }) == ErrorCode::config_error);
        CHECK(error_of([] { load_config("/nonexistent/config.json"); }) == ErrorCode::io_error);
    }
}

TEST_CASE("config overrides") {
    Json j = parse_config_text(R"({"solver": {"theta": 2.0}})");
    apply_override(j, "solver.theta=1.0");
    CHECK(j["solver"]["theta"].get<double>() == 1.0);
    apply_override(j, "problem.grid.n=9");
    CHECK(j["problem"]["grid"]["n"].get<int>() == 9);
    apply_override(j, "task=dtn");
    CHECK(j["task"].get<std::string>() == "dtn");
    apply_override(j, "dtn.points=[1, 2]");
    CHECK(j["dtn"]["points"].size() == 2);
    CHECK(error_of([&] { apply_override(j, "no_equals_sign"); }) == ErrorCode::config_error);
    CHECK(error_of([&] { apply_override(j, "solver..theta=1"); }) == ErrorCode::config_error);
    CHECK(error_of([&] { apply_override(j, "solver.theta.deeper=1"); }) == ErrorCode::config_error);
    apply_override(j, "solver.thetta=3");
    CHECK(error_of([&] { parse_experiment(j); }) == ErrorCode::config_error);
}

TEST_CASE("csv formatting and comparison") {
    const fs::path dir = scratch("csv");
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);

    const CsvTable a{{"t", "node", "u"}, {{"0.5", "0", "1"}, {"0.5", "1", "2"}}};
    CsvTable b = a;
    b.rows[1][2] = "2.002";
    write_csv(dir / "a.csv", a);
    write_csv(dir / "b.csv", b);
    const CsvTable back = read_csv(dir / "a.csv");
    CHECK(back.header == a.header);
    CHECK(back.rows == a.rows);

    const CompareReport same = compare_csv(dir / "a.csv", dir / "a.csv", 0.0);
    CHECK(same.pass);
    CHECK(same.rows == 2);
    for (const auto& c : same.columns) CHECK(c.max_rel == 0.0);

    const CompareReport close = compare_csv(dir / "b.csv", dir / "a.csv", 1e-3);
    CHECK(close.pass);
    CHECK(close.columns[2].max_rel == doctest::Approx(1e-3));
    CHECK_FALSE(compare_csv(dir / "b.csv", dir / "a.csv", 1e-4).pass);

    CsvTable c = a;
    c.rows.pop_back();
    write_csv(dir / "c.csv", c);
    CHECK(error_of([&] { compare_csv(dir / "a.csv", dir / "c.csv", 1.0); }) == ErrorCode::schema_mismatch);
    CsvTable d = a;
    d.header[2] = "v";
    write_csv(dir / "d.csv", d);
    CHECK(error_of([&] { compare_csv(dir / "a.csv", dir / "d.csv", 1.0); }) == ErrorCode::schema_mismatch);
    CHECK(error_of([&] { read_csv(dir / "missing.csv"); }) == ErrorCode::io_error);
}

TEST_CASE("operator modes") {
    const SpatialGrid g = test::unit_grid(1, 16);
    const EllipticOperator op = assemble_operator(g, test::constant_field(g, 0.5, 1.0, 0.0));
    for (int k : {1, 2, 5}) {
        // sine modes start positive at the first interior node
        CHECK((operator_mode(op, k) - test::sine_mode(g, k)).norm() <= 1e-12);
    }
    CHECK(error_of([&] { operator_mode(op, 0); }) == ErrorCode::domain_error);
    CHECK(error_of([&] { operator_mode(op, 16); }) == ErrorCode::domain_error);
}

TEST_CASE("solve task writes deterministic artifacts") {
    const fs::path one = scratch("solve1"), two = scratch("solve2");
    Json j = eigenmode_config(one);
    const RunSummary a = run(parse_experiment(j));
    j["output"]["dir"] = two.string();
    j["threads"] = 3;
    run(parse_experiment(j));
    REQUIRE(fs::exists(one / "solution.csv"));
    REQUIRE(fs::exists(one / "solve_report.json"));
    CHECK(slurp(one / "solution.csv") == slurp(two / "solution.csv"));
    CHECK(a.report["version"].get<std::string>() == std::string(kVersion));
    CHECK(a.report["config"]["problem"]["grid"]["n"].get<int>() == 16);

    // the first mode decays like E_0.6(-lambda_1 t^0.6); the oracle task agrees
    j["output"]["dir"] = (two / "oracle").string();
    j["task"] = "oracle";
    run(parse_experiment(j));
    const CompareReport r = compare_csv(one / "solution.csv", two / "oracle" / "solution.csv", 1e-8);
    CHECK(r.pass);
}

TEST_CASE("numerical preconditions surface from the core") {
    const fs::path dir = scratch("theta");
    Json j = eigenmode_config(dir);
    apply_override(j, "solver.theta=1.0");
    CHECK(error_of([&] { run(parse_experiment(j)); }) == ErrorCode::contour_error);
    Json k = eigenmode_config(dir);
    apply_override(k, "problem.coefficients.alpha=1.5");
    CHECK(error_of([&] { run(parse_experiment(k)); }) == ErrorCode::invalid_order);
    Json m = eigenmode_config(dir);
    m["problem"].erase("times");
    CHECK(error_of([&] { run(parse_experiment(m)); }) == ErrorCode::config_error);
}

TEST_CASE("dtn, invert and resolvent tasks") {
    const fs::path dir = scratch("pipeline");
    Json j = parse_config_text(R"({
      "task": "dtn",
      "problem": {
        "grid": {"dimension": 2, "n": 5},
        "coefficients": {"alpha": {"expr": "0.4 + 0.2*x"}, "rho": 1.5, "q": {"expr": "1 + y"}}
      },
      "dtn": {"points": [1e-6, 1, 2.718281828459045]}
    })");
    j["output"]["dir"] = (dir / "dtn").string();
    run(parse_experiment(j));
    const CsvTable records = read_csv(dir / "dtn" / "dtn.csv");
    const CsvTable drives = read_csv(dir / "dtn" / "drives.csv");
    // 20 boundary nodes: one unit drive each, all of them in S_out
    CHECK(records.rows.size() == 3 * 20 * 20);
    CHECK(drives.rows.size() == 20 * 20);

    j["task"] = "invert";
    j.erase("dtn");
    j["invert"] = {{"dtn_csv", (dir / "dtn" / "dtn.csv").string()},
                   {"drives_csv", (dir / "dtn" / "drives.csv").string()},
                   {"truth", true}};
    j["output"]["dir"] = (dir / "inv").string();
    const RunSummary inv = run(parse_experiment(j));
    const Json& err = inv.report["results"]["relative_errors"];
    CHECK(err["alpha"].get<double>() <= 5e-2);
    CHECK(err["rho"].get<double>() <= 5e-2);
    CHECK(err["q"].get<double>() <= 5e-2);
    CHECK(read_csv(dir / "inv" / "fields.csv").rows.size() == 16);
    CHECK(read_csv(dir / "inv" / "potentials.csv").rows.size() == 48);

    // time-domain records cannot be inverted directly
    Json t = parse_config_text(R"({"task": "dtn", "problem": {"grid": {"dimension": 2, "n": 3}},
                                   "dtn": {"mode": "time", "points": [0.5, 1.0]}})");
    t["output"]["dir"] = (dir / "time").string();
    run(parse_experiment(t));
    t["task"] = "invert";
    t.erase("dtn");
    t["invert"] = {{"dtn_csv", (dir / "time" / "dtn.csv").string()},
                   {"drives_csv", (dir / "time" / "drives.csv").string()}};
    CHECK(error_of([&] { run(parse_experiment(t)); }) == ErrorCode::schema_mismatch);

    Json r = parse_config_text(R"({"task": "verify-resolvent", "seed": 7,
                                   "problem": {"grid": {"dimension": 1, "n": 12},
                                               "coefficients": {"alpha": {"expr": "0.3 + 0.4*x"}}},
                                   "resolvent": {"samples": 20}})");
    r["output"]["dir"] = (dir / "res").string();
    const RunSummary res = run(parse_experiment(r));
    CHECK(res.report["results"]["satisfied"].get<int>() == 20);
    const CsvTable rt = read_csv(dir / "res" / "resolvent.csv");
    CHECK(rt.header == std::vector<std::string>{"r", "beta", "theta_star", "C", "bound", "estimated_norm", "satisfied"});
    r["output"]["dir"] = (dir / "res2").string();
    run(parse_experiment(r));
    CHECK(slurp(dir / "res" / "resolvent.csv") == slurp(dir / "res2" / "resolvent.csv"));
}

TEST_CASE("mittag-leffler oracle task") {
    const fs::path dir = scratch("ml");
    Json j = parse_config_text(R"({"task": "oracle", "oracle": {"method": "mittag_leffler", "alpha": 1.0,
                                   "beta": 1.0, "z": [-2, [0, 1]]}})");
    j["output"]["dir"] = dir.string();
    run(parse_experiment(j));
    const CsvTable t = read_csv(dir / "mittag_leffler.csv");
    REQUIRE(t.rows.size() == 2);
    CHECK(std::strtod(t.rows[0][4].c_str(), nullptr) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(std::strtod(t.rows[1][4].c_str(), nullptr) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
    CHECK(std::strtod(t.rows[1][5].c_str(), nullptr) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
}
