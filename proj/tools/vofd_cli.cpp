// Command-line front end. Talks to the toolkit only through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vofd/vofd.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

int exit_code(vofd_status s) {
    if (s == VOFD_OK) return kExitOk;
    return vofd_status_is_usage(s) ? kExitUsage : kExitNumerical;
}

int report_failure(vofd_status s) {
    std::fprintf(stderr, "vofd: %s\n", vofd_last_error());
    return exit_code(s);
}

struct GlobalOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::string out_dir;
    long seed = -1;
    int threads = 0;
};

int run_task(const std::string& task, const GlobalOptions& g) {
    if (g.config.empty()) {
        std::fprintf(stderr, "vofd: --config is required for '%s'\n", task.c_str());
        return kExitUsage;
    }
    vofd_config* cfg = nullptr;
    vofd_status s = vofd_config_load(g.config.c_str(), &cfg);
    if (s != VOFD_OK) return report_failure(s);
    auto apply = [&](vofd_status st) {
        if (s == VOFD_OK) s = st;
    };
    apply(vofd_config_set_task(cfg, task.c_str()));
    for (const auto& kv : g.overrides) apply(vofd_config_override(cfg, kv.c_str()));
    if (!g.out_dir.empty()) apply(vofd_config_set_out_dir(cfg, g.out_dir.c_str()));
    if (g.seed >= 0) apply(vofd_config_set_seed(cfg, static_cast<unsigned long>(g.seed)));
    if (g.threads > 0) apply(vofd_config_set_threads(cfg, g.threads));
    if (s == VOFD_OK) s = vofd_config_validate(cfg);
    char* report = nullptr;
    if (s == VOFD_OK) s = vofd_run(cfg, &report);
    vofd_config_free(cfg);
    if (s != VOFD_OK) return report_failure(s);
    std::printf("%s\n", report);
    vofd_string_free(report);
    return kExitOk;
}

int run_compare(const std::string& a, const std::string& b, double tolerance) {
    vofd_compare_report* rep = nullptr;
    const vofd_status s = vofd_compare(a.c_str(), b.c_str(), tolerance, &rep);
    if (s != VOFD_OK) return report_failure(s);
    std::printf("rows %zu\n", vofd_compare_rows(rep));
    for (size_t i = 0; i < vofd_compare_columns(rep); ++i) {
        const char* name = nullptr;
        int numeric = 0;
        double max_abs = 0.0, max_rel = 0.0;
        vofd_compare_column(rep, i, &name, &numeric, &max_abs, &max_rel);
        if (numeric)
            std::printf("column %s max_abs %.17g max_rel %.17g\n", name, max_abs, max_rel);
        else
            std::printf("column %s text identical\n", name);
    }
    const bool pass = vofd_compare_pass(rep) != 0;
    std::printf("%s (tolerance %.17g)\n", pass ? "PASS" : "FAIL", tolerance);
    vofd_compare_free(rep);
    return pass ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variable-order time-fractional diffusion: forward solves, DtN data and inversion"};
    app.set_version_flag("--version", std::string(vofd_version()));
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "JSON experiment config");
    app.add_option("--override", g.overrides, "key.path=value applied to the config (repeatable)")->take_all();
    app.add_option("--out-dir", g.out_dir, "Directory for CSVs and the run report");
    app.add_option("--seed", g.seed, "Seed for randomized checks")->check(CLI::NonNegativeNumber);
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

    const std::vector<std::pair<std::string, std::string>> tasks = {
        {"solve", "Forward solve by contour quadrature"},
        {"dtn", "Dirichlet-to-Neumann records in the time or Laplace domain"},
        {"invert", "Recover alpha, rho and q from Laplace-domain DtN records"},
        {"verify-resolvent", "Check the resolvent bound at random shifts"},
        {"oracle", "Reference solvers: eigen expansion, L1 stepping, Mittag-Leffler"},
    };
    std::string chosen;
    for (const auto& [name, help] : tasks) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->callback([&chosen, n = name] { chosen = n; });
    }

    std::string file_a, file_b;
    double tolerance = 1e-9;
    CLI::App* cmp = app.add_subcommand("compare", "Column-wise comparison of two result CSVs");
    cmp->add_option("a", file_a, "First CSV")->required();
    cmp->add_option("b", file_b, "Reference CSV")->required();
    cmp->add_option("--tolerance", tolerance, "Maximum relative difference per column");
    cmp->callback([&chosen] { chosen = "compare"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (chosen == "compare") return run_compare(file_a, file_b, tolerance);
    return run_task(chosen, g);
}
