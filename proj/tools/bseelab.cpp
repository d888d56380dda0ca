// bseelab: scenario runner, verification suites, and convergence studies for
// the BSEE laboratory. Exit codes: 0 ok, 2 config error, 3 non-convergence,
// 4 property failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsee/scenario.hpp"
#include "bsee/verification.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitPropertyFailure = 4;

fs::path default_out_dir() {
    if (const char* env = std::getenv("BSEELAB_OUT")) return fs::path(env);
    return fs::path("out");
}

std::vector<int> parse_steps_list(const std::string& spec) {
    std::vector<int> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int n = std::stoi(item, &used);
            if (used != item.size() || n <= 0) throw std::invalid_argument(item);
            out.push_back(n);
        } catch (const std::exception&) {
            throw bsee::ConfigError("--steps: bad entry '" + item + "'");
        }
    }
    if (out.empty()) throw bsee::ConfigError("--steps: empty list");
    return out;
}

int cmd_solve(const std::string& config_ref, std::optional<std::uint64_t> seed,
              const fs::path& out_dir, bool dump_nodes) {
    bsee::ScenarioConfig cfg = bsee::load_scenario(config_ref);
    bsee::ScenarioRunResult res = bsee::run_scenario(cfg, seed);

    fs::create_directories(out_dir);
    bsee::write_solution_csv(out_dir / "solution.csv", res);
    bsee::write_manifest(out_dir / "manifest.json", res);
    {
        std::ofstream copy(out_dir / "config.cfg");
        copy << cfg.source_text;
    }
    if (dump_nodes) bsee::write_nodes_csv(out_dir / "nodes.csv", res);

    const double residual =
        *std::max_element(res.residual_profile.begin(), res.residual_profile.end());
    std::cout << "scenario=" << (cfg.name.empty() ? "<file>" : cfg.name)
              << " solver=" << cfg.method << " steps=" << cfg.steps
              << " residual=" << residual << " iterations=" << res.sol.iterations << "\n";
    if (residual > cfg.tol) {
        std::cerr << "residual " << residual << " exceeds tol " << cfg.tol << "\n";
        return kExitNoConvergence;
    }
    return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
    auto checks = bsee::verify::run_suite(suite, seed);
    std::cout << bsee::verify::report_json(checks).dump(2) << "\n";
    bool all_pass = true;
    for (const auto& c : checks) all_pass = all_pass && c.pass;
    if (!all_pass) {
        std::cerr << "property failure in suite '" << suite << "'\n";
        return kExitPropertyFailure;
    }
    return kExitOk;
}

int cmd_convergence(const std::string& config_ref, const std::string& steps_spec,
                    std::optional<std::uint64_t> seed, const fs::path& out_dir) {
    bsee::ScenarioConfig cfg = bsee::load_scenario(config_ref);
    const auto steps = parse_steps_list(steps_spec);
    auto table = bsee::run_convergence(cfg, steps, seed);

    fs::create_directories(out_dir);
    bsee::write_convergence_csv(out_dir / "convergence.csv", table);
    for (const auto& row : table) {
        std::cout << "N=" << row.steps << " max_error=" << row.error;
        if (row.order) std::cout << " order=" << *row.order;
        std::cout << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bseelab: backward stochastic evolution equation laboratory"};
    app.require_subcommand(1);

    std::string config_ref, suite = "all", steps_spec;
    std::optional<std::uint64_t> seed;
    std::string out_dir_flag;
    bool dump_nodes = false;

    auto* solve = app.add_subcommand("solve", "run a scenario and emit CSV + manifest");
    solve->add_option("--config", config_ref, "builtin scenario name or config file path")
        ->required();
    solve->add_option("--seed", seed, "override the model seed");
    solve->add_option("--out", out_dir_flag, "output directory (default $BSEELAB_OUT or ./out)");
    solve->add_flag("--dump-nodes", dump_nodes, "also write the full nodewise solution");

    auto* verify = app.add_subcommand("verify", "run a property suite");
    verify->add_option("--suite", suite, "all|gamma|stochastic|representation|solvers")
        ->required();
    std::uint64_t verify_seed = 1;
    verify->add_option("--seed", verify_seed, "suite seed");

    auto* conv = app.add_subcommand("convergence", "closed-form convergence study across N");
    conv->add_option("--config", config_ref, "builtin scenario name or config file path")
        ->required();
    conv->add_option("--steps", steps_spec, "comma-separated N list, e.g. 8,16,32")->required();
    conv->add_option("--seed", seed, "override the model seed");
    conv->add_option("--out", out_dir_flag, "output directory (default $BSEELAB_OUT or ./out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    const fs::path out_dir = out_dir_flag.empty() ? default_out_dir() : fs::path(out_dir_flag);
    try {
        if (solve->parsed()) return cmd_solve(config_ref, seed, out_dir, dump_nodes);
        if (verify->parsed()) return cmd_verify(suite, verify_seed);
        return cmd_convergence(config_ref, steps_spec, seed, out_dir);
    } catch (const bsee::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const bsee::NonContractionError& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const bsee::NoConvergenceError& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
